from enum import Enum

class ConfigBlock(Enum):
    PREDICTOR = 'predictor'
    DISCRIMINATOR = 'discriminator'
    LOSS = 'loss'
    TRAINING = 'training'
    SYNTHETIC = 'synthetic'
    SYNTHESIS = 'synthesis'
    METRICS = 'metrics'
    FORECAST = 'forecast'

# top-level keys that describe the file rather than configure a module
METADATA_KEYS = ('version_date', 'version_number', 'change_notes')
