from django.dispatch import Signal

# Arguments are listed next to each signal.
jump_taken = Signal()  # automaton, jump
guard_ambiguity = Signal()  # automaton, mode, edges, time
invariant_exit = Signal()  # automaton, mode, time
flowpipe_truncated = Signal()  # mode, step, reason
split_applied = Signal()  # block, splitter, label, cells
refinement_finished = Signal()  # partition, stable
certificate_checked = Signal()  # check, passed, margin
window_discarded = Signal()  # time, reason
stability_fault = Signal()  # time, reason
