import yaml


class FormattedResponse:

    def __init__(self, d='', m='', s=True, exit_code=0):
        self.data = {'s': s, 'm': m, 'd': d}
        self.exit_code = exit_code

    def render(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False, default_flow_style=False)
