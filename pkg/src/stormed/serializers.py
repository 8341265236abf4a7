from rest_framework import serializers

from backend.validators import finite_vector
from stormed.certificate import StormedCertificate


class CertificateSerializer(serializers.Serializer):
    phi = serializers.ListField(child=serializers.FloatField(), allow_empty=False, validators=[finite_vector])
    eps = serializers.FloatField()
    zeta = serializers.FloatField()
    d_min = serializers.FloatField()
    b_minus = serializers.FloatField()
    b_plus = serializers.FloatField()
    lipschitz = serializers.ListField(child=serializers.FloatField(), required=False, default=list)
    diameter = serializers.FloatField(required=False, default=0.0)

    def validate(self, data):
        for key in ('eps', 'zeta', 'd_min'):
            if data[key] <= 0:
                raise serializers.ValidationError({key: ["Must be positive."]})
        if data['b_minus'] >= data['b_plus']:
            raise serializers.ValidationError({'b_plus': ["Must exceed b_minus."]})
        if data['lipschitz'] and len(data['lipschitz']) != len(data['phi']):
            raise serializers.ValidationError({'lipschitz': [f"Expected {len(data['phi'])} bounds."]})
        return data

    def create(self, validated_data):
        return StormedCertificate(**validated_data)
