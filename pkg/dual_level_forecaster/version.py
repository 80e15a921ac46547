__version__ = '0.3.0'
FORMAT_VERSION = 'DMF1'
SCENE_SCHEMA_VERSION = 1
