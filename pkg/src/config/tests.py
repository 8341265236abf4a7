import os
import tempfile

import yaml
from django.test import SimpleTestCase, override_settings

from backend.exceptions import ConfigError
from config import config
from config.backends import FileBackend, MemoryBackend


class ConfigTestCase(SimpleTestCase):

    def tearDown(self):
        config.backend.load(defaults=config.DEFAULT_CONFIG)

    def test_defaults_loaded(self):
        self.assertEquals(config.get('delta'), 0.05)
        self.assertEquals(config.get('lambda_grid'), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_set(self):
        config.set('eps', 0.01)
        self.assertEquals(config.get('eps'), 0.01)

    def test_set_bulk(self):
        config.set_bulk({'eps': 0.5, 'seed': 7})
        self.assertEquals(config.get('seed'), 7)
        self.assertEquals(config.get('eps'), 0.5)

    def test_unknown_key(self):
        with self.assertRaises(ConfigError):
            config.get('max_depth')

    def test_plugin_config(self):
        config.add_plugin_config('test_plugin', {'value': 1})
        self.assertEquals(config.get('test_plugin'), {'value': 1})
        del config.DEFAULT_CONFIG['test_plugin']


class FileBackendTestCase(SimpleTestCase):

    def setUp(self):
        handle, self.path = tempfile.mkstemp(suffix=".yaml")
        os.close(handle)

    def tearDown(self):
        os.remove(self.path)

    def write(self, values):
        with open(self.path, "w") as handle:
            yaml.safe_dump(values, handle)

    def test_overrides(self):
        self.write({'config_version': 1, 'delta': 0.1})
        with override_settings(CONFIG={'BACKEND': 'config.backends.FileBackend', 'FILE': self.path}):
            backend = FileBackend()
            backend.load(defaults=config.DEFAULT_CONFIG)
        self.assertEquals(backend.get('delta'), 0.1)
        self.assertEquals(backend.get('eps'), 0.0)

    def test_stale_file_ignored(self):
        self.write({'config_version': 0, 'delta': 0.1})
        with override_settings(CONFIG={'BACKEND': 'config.backends.FileBackend', 'FILE': self.path}):
            backend = FileBackend()
            backend.load(defaults=config.DEFAULT_CONFIG)
        self.assertEquals(backend.get('delta'), 0.05)

    def test_unknown_key_rejected(self):
        self.write({'config_version': 1, 'max_depth': 3})
        with override_settings(CONFIG={'BACKEND': 'config.backends.FileBackend', 'FILE': self.path}):
            backend = FileBackend()
            with self.assertRaises(ConfigError):
                backend.load(defaults=config.DEFAULT_CONFIG)

    def test_save_round(self):
        with override_settings(CONFIG={'BACKEND': 'config.backends.FileBackend', 'FILE': self.path}):
            backend = FileBackend()
            backend.load(defaults=config.DEFAULT_CONFIG)
            backend.set('seed', 3)
            backend.save()
            reloaded = FileBackend()
            reloaded.load(defaults=config.DEFAULT_CONFIG)
        self.assertEquals(reloaded.get('seed'), 3)


class MemoryBackendTestCase(SimpleTestCase):

    def test_load_copies(self):
        backend = MemoryBackend()
        backend.load(defaults=config.DEFAULT_CONFIG)
        backend.get('lambda_grid').append(2.0)
        self.assertEquals(len(config.DEFAULT_CONFIG['lambda_grid']), 5)
