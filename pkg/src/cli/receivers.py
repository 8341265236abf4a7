from collections import Counter

from backend import signals

COUNTED = (
    "jump_taken", "guard_ambiguity", "invariant_exit", "flowpipe_truncated", "split_applied",
    "refinement_finished", "certificate_checked", "window_discarded", "stability_fault",
)


class EventCounter:
    """Counts the signals sent while the block runs."""

    def __init__(self):
        self.counts = Counter()
        self._receivers = {}

    def _receiver(self, name):
        def receive(sender, **kwargs):
            self.counts[name] += 1
        return receive

    def __enter__(self):
        for name in COUNTED:
            receiver = self._receivers[name] = self._receiver(name)
            getattr(signals, name).connect(receiver, weak=False)
        return self

    def __exit__(self, *exc):
        for name, receiver in self._receivers.items():
            getattr(signals, name).disconnect(receiver)
        self._receivers = {}
        return False

    def as_dict(self):
        return {name: int(self.counts[name]) for name in sorted(self.counts)}
