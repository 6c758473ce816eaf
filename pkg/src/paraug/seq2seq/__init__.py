from .checkpoint import CheckpointError, load_checkpoint, read_header, save_checkpoint
from .corpus import read_parallel, encode_pairs
from .model import (
    DECODER_BLOCKS,
    ENCODER_BLOCKS,
    PARAM_ORDER,
    ContextVector,
    DecoderState,
    Seq2SeqModel,
    batch_loss,
    encode,
    extend_output_vocab,
    gradients,
    init_model,
    initial_state,
    reinit_decoder,
    sequence_loss,
    step_decoder,
    step_decoder_log,
    wrap_target,
)
from .train import SCHEMES, TrainConfig, TrainingError, apply_scheme, train, train_shared_encoder
