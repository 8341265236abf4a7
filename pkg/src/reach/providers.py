from plugins.providers import Provider
from reach.post import edge_posts, post_tau_over


class FlowpipePostProvider(Provider):
    """Post operators built on template flowpipes and template-hulled discrete images."""

    type = 'post'
    name = 'flowpipe'

    def tau(self, aut, mode, P, cfg):
        return [image for _, image in post_tau_over(aut, [(mode, P)], cfg)]

    def edges(self, aut, mode, P, cfg):
        return list(edge_posts(aut, mode, P, cfg.V))
