import numpy as np
from rest_framework import serializers


def finite_matrix(value) -> None:
    """Ensure a nested list is a rectangular matrix of finite reals."""
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise serializers.ValidationError("Enter a rectangular matrix of numbers.")
    if array.ndim != 2:
        raise serializers.ValidationError("Enter a matrix (a list of rows).")
    if not np.all(np.isfinite(array)):
        raise serializers.ValidationError("Matrix entries must be finite.")


def finite_vector(value) -> None:
    try:
        array = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise serializers.ValidationError("Enter a list of numbers.")
    if array.ndim != 1:
        raise serializers.ValidationError("Enter a flat list of numbers.")
    if not np.all(np.isfinite(array)):
        raise serializers.ValidationError("Vector entries must be finite.")


def unit_interval(value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise serializers.ValidationError("Must lie in [0, 1].")
