import numpy as np
from rest_framework import serializers

from backend.exceptions import ModelError
from backend.validators import finite_matrix, finite_vector
from hybrid_core.automaton import AffineReset, Edge, HybridAutomaton
from plugins.plugins import get_plugin
from setgeom.polytope import Polytope


class PolytopeSerializer(serializers.Serializer):
    A = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), allow_empty=True)
    b = serializers.ListField(child=serializers.FloatField(), allow_empty=True)

    def validate(self, data):
        if len(data['A']) != len(data['b']):
            raise serializers.ValidationError({'b': [f"{len(data['A'])} rows in A but {len(data['b'])} entries in b."]})
        if data['A']:
            finite_matrix(data['A'])
        return data


class ResetSerializer(serializers.Serializer):
    M = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()), validators=[finite_matrix])
    c = serializers.ListField(child=serializers.FloatField(), required=False, validators=[finite_vector])


class EdgeSerializer(serializers.Serializer):
    name = serializers.CharField(required=False)
    src = serializers.CharField()
    dst = serializers.CharField()
    guard = PolytopeSerializer(required=False)
    reset = ResetSerializer(required=False)
    listens = serializers.CharField(required=False, allow_null=True, default=None)
    emits = serializers.ListField(child=serializers.CharField(), required=False, default=list)


class InitSerializer(serializers.Serializer):
    mode = serializers.CharField()
    set = PolytopeSerializer()


class ModelSerializer(serializers.Serializer):
    name = serializers.CharField(required=False, default="automaton")
    dim = serializers.IntegerField(min_value=1)
    coords = serializers.ListField(child=serializers.CharField(), required=False)
    modes = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    flows = serializers.DictField(child=serializers.DictField())
    invariants = serializers.DictField(child=PolytopeSerializer(), required=False, default=dict)
    edges = EdgeSerializer(many=True, required=False, default=list)
    init = InitSerializer(many=True)
    terminal = serializers.ListField(child=serializers.CharField(), required=False, default=list)

    def _polytope(self, data, field, dim):
        try:
            return Polytope.from_dict(data, dim)
        except ModelError as e:
            raise serializers.ValidationError({field: [str(v) for v in e.d.get("A", [e.m])]})

    def validate(self, data):
        dim = data['dim']
        modes = set(data['modes'])
        if data.get('coords') and len(data['coords']) != dim:
            raise serializers.ValidationError({'coords': [f"Expected {dim} coordinate names."]})
        missing = modes - set(data['flows'])
        if missing:
            raise serializers.ValidationError({'flows': [f"No flow for mode {mode}." for mode in sorted(missing)]})
        flows = {}
        for mode, spec in data['flows'].items():
            if mode not in modes:
                raise serializers.ValidationError({'flows': [f"Unknown mode {mode}."]})
            try:
                flows[mode] = get_plugin('flow', spec.get('kind')).from_dict(spec, dim)
            except ModelError as e:
                raise serializers.ValidationError({'flows': [f"{mode}: {e.m}"]})
            except (KeyError, TypeError, ValueError) as e:
                raise serializers.ValidationError({'flows': [f"{mode}: malformed flow ({e})."]})
        data['flows'] = flows
        data['invariants'] = {mode: self._polytope(p, 'invariants', dim) for mode, p in data['invariants'].items()}
        for mode in list(data['invariants']) + [entry['mode'] for entry in data['init']] + data['terminal']:
            if mode not in modes:
                raise serializers.ValidationError({'modes': [f"Unknown mode {mode}."]})
        edges = []
        for entry in data['edges']:
            if entry['src'] not in modes or entry['dst'] not in modes:
                raise serializers.ValidationError({'edges': [f"Edge {entry['src']}->{entry['dst']} joins unknown modes."]})
            guard = self._polytope(entry['guard'], 'edges', dim) if 'guard' in entry else Polytope.whole(dim)
            reset = entry.get('reset')
            try:
                reset = AffineReset.from_dict(reset, dim)
            except ModelError as e:
                raise serializers.ValidationError({'edges': [f"Reset of {entry['src']}->{entry['dst']}: {e.m}"]})
            edges.append(Edge(entry['src'], entry['dst'], guard, reset, name=entry.get('name'),
                              listens=entry['listens'], emits=entry['emits']))
        data['edges'] = edges
        data['init'] = [(entry['mode'], self._polytope(entry['set'], 'init', dim)) for entry in data['init']]
        return data

    def create(self, validated_data):
        return HybridAutomaton(
            validated_data['dim'], validated_data['modes'], validated_data['flows'], validated_data['edges'],
            invariants=validated_data['invariants'], init=validated_data['init'],
            terminal=validated_data['terminal'], name=validated_data['name'], coords=validated_data.get('coords'),
        )


def automaton_to_dict(aut):
    """The model-file document for an explicit automaton."""
    return {
        "name": aut.name,
        "dim": aut.dim,
        "coords": list(aut.coords),
        "modes": [str(mode) for mode in aut.modes],
        "flows": {str(mode): aut.flow(mode).to_dict() for mode in aut.modes},
        "invariants": {str(mode): aut.invariant(mode).to_dict() for mode in aut.modes
                       if aut.invariant(mode).A.shape[0]},
        "edges": [
            {
                "name": edge.name, "src": str(edge.src), "dst": str(edge.dst), "guard": edge.guard.to_dict(),
                "reset": {"M": edge.reset.M.tolist(), "c": np.asarray(edge.reset.c).tolist()},
                "listens": edge.listens, "emits": list(edge.emits),
            }
            for edge in aut.all_edges()
        ],
        "init": [{"mode": str(mode), "set": polytope.to_dict()} for mode, polytope in aut.init],
        "terminal": sorted(str(mode) for mode in aut.terminal),
    }
