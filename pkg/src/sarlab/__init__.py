"""sarlab: anti-distortion acoustic representation learning and evaluation.

Subpackages:
    dsp        -- WAV I/O, resampling, STFT, mel extraction, Griffin-Lim
    nn         -- trainable layers (FC, PReLU, BLSTM), Adam, gradients
    model      -- the masked auto-encoder (encode / mask / decode / train)
    corruption -- feature noise, feature masking, bandwidth degradation
    metrics    -- ESTOI and a log-mel distortion proxy
    harness    -- dataset splits, evaluation systems, report tables
"""

__version__ = "0.1.0"
