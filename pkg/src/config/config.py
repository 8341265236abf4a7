from pydoc import locate

from django.conf import settings

DEFAULT_CONFIG = {
    'config_version': 1,
    'seed': 0,
    'delta': 0.05,
    'lambda_grid': [0.0, 0.25, 0.5, 0.75, 1.0],
    'eps': 0.0,
    'templates': 'auto',
    'octagonal_max_dim': 4,
    'horizon': 30.0,
    'max_blocks': 500,
    'max_iters': 20,
    'time_tolerance': 1e-9,
    'guard_tolerance': 1e-6,
    'support_tolerance': 1e-9,
    'semigroup_tolerance': 1e-9,
    'monotonic_slack': 1e-9,
    'coefficient_tolerance': 1e-9,
    'mat_exp_tolerance': 1e-12,
    'phi2_max_terms': 200,
    'lipschitz_samples': 10000,
    'lipschitz_safety': 1.5,
    'cert_samples': 1000,
    'simulation_samples': 10000,
    'strict_urgency': False,
    'max_zero_time_jumps': 1000,
    'peak_probe_step': 1e-4,
    'post_provider': 'flowpipe',
}

backend = locate(settings.CONFIG['BACKEND'])()
backend.load(defaults=DEFAULT_CONFIG)


def get(key):
    return backend.get(key)


def set(key, value):
    backend.set(key, value)


def get_all():
    return backend.get_all()


def set_bulk(values: dict):
    for key, value in values.items():
        set(key, value)


def add_plugin_config(name, config):
    DEFAULT_CONFIG[name] = config
    if backend.get_all().get(name) is None:
        backend.set(name, config)
