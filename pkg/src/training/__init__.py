"""
Encoder, optimizer, trainer and negative sampling.
"""

from .encoder import EncoderModel, Checkpoint, save_checkpoint, load_checkpoint
from .optimizer import AdamWState, adamw_step, warmup_learning_rate
from .trainer import Trainer, TrainRun, EpochRecord, train, seed_search
from .pfcc_sampler import PfccNegativeSampler, PfccSample, sample_pfcc_negatives

__all__ = [
    'EncoderModel',
    'Checkpoint',
    'save_checkpoint',
    'load_checkpoint',
    'AdamWState',
    'adamw_step',
    'warmup_learning_rate',
    'Trainer',
    'TrainRun',
    'EpochRecord',
    'train',
    'seed_search',
    'PfccNegativeSampler',
    'PfccSample',
    'sample_pfcc_negatives'
]
