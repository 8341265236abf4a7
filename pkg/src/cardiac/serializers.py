from dataclasses import dataclass

from rest_framework import serializers

from backend.exceptions import ModelError
from cardiac.loop import PERIODS, Scenario, closed_loop
from cardiac.params import DetectionTreeConfig, DiscrimParams, ElectrodeConfig, HeartParams, SenseParams

SECTIONS = {
    "heart": HeartParams,
    "electrodes": ElectrodeConfig,
    "sense": SenseParams,
    "discriminators": DiscrimParams,
    "tree": DetectionTreeConfig,
}


@dataclass
class ScenarioSetup:
    scenario: Scenario
    heart: HeartParams
    electrodes: ElectrodeConfig
    sense: SenseParams
    discriminators: DiscrimParams
    tree: DetectionTreeConfig
    duration: float = None

    def build(self, dt=None):
        kwargs = {} if dt is None else {"dt": dt}
        return closed_loop(self.heart, self.electrodes, self.sense, self.discriminators, self.tree, self.scenario,
                           **kwargs)

    @property
    def run_duration(self):
        return self.duration if self.duration is not None else self.heart.D


class PacingSerializer(serializers.Serializer):
    cell = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=2, max_length=2,
                                 required=False)
    period = serializers.FloatField(min_value=0, required=False)
    offset = serializers.FloatField(min_value=0, required=False, default=0.05)


class ParamsSerializer(serializers.Serializer):
    heart = serializers.DictField(required=False, default=dict)
    electrodes = serializers.DictField(required=False, default=dict)
    sense = serializers.DictField(required=False, default=dict)
    discriminators = serializers.DictField(required=False, default=dict)
    tree = serializers.DictField(required=False, default=dict)


class ScenarioSerializer(serializers.Serializer):
    scenario = serializers.ChoiceField(choices=sorted(PERIODS))
    N = serializers.IntegerField(min_value=1, required=False)
    pacing = PacingSerializer(required=False, default=dict)
    params = ParamsSerializer(required=False, default=dict)
    duration = serializers.FloatField(min_value=0, required=False)

    def validate(self, data):
        overrides = data['params']
        if 'N' in data:
            overrides['heart'] = dict(overrides.get('heart', {}), N=data['N'])
        built = {}
        for section, cls in SECTIONS.items():
            try:
                built[section] = cls(**overrides.get(section, {}))
            except TypeError as e:
                raise serializers.ValidationError({'params': {section: [str(e)]}})
            except ModelError as e:
                raise serializers.ValidationError({'params': {section: e.d}})
        pacing = data['pacing']
        cell = pacing.get('cell')
        try:
            scenario = Scenario(data['scenario'], tuple(cell) if cell else None, pacing.get('period'),
                                pacing.get('offset', 0.05))
            scenario.pacing(built['heart'])
        except ModelError as e:
            raise serializers.ValidationError({'pacing': e.d})
        return {'setup': ScenarioSetup(scenario, duration=data.get('duration'), **built)}

    def create(self, validated_data):
        return validated_data['setup']


def build_scenario(document):
    if not isinstance(document, dict):
        raise ModelError(d={"document": ["Expected a mapping."]}, m="invalid_scenario")
    serializer = ScenarioSerializer(data=document)
    if not serializer.is_valid():
        raise ModelError(d=serializer.errors, m="invalid_scenario")
    return serializer.save()


def is_scenario_document(document):
    return isinstance(document, dict) and "scenario" in document and "modes" not in document
