from .encoder import (
    EncoderParams,
    Layer,
    Tape,
    affine_layer,
    build_encoder,
    conv_layer,
    decode_checkpoint,
    encode_checkpoint,
    encoder_backward,
    encoder_forward,
    forward_batch,
    load_checkpoint,
    pool_layer,
    save_checkpoint,
    tanh_layer,
)
from .losses import (
    MiningResult,
    MsLossConfig,
    PairWeights,
    SimilarityMatrix,
    cosine_similarity,
    embedding_grad,
    mine_pairs,
    ms_loss,
    ms_loss_grad,
    normalize_backward,
    normalize_embedding,
    normalize_rows,
    pair_weights,
    pairwise_similarity,
)
from .sampling import Batch, ClipIndex, sample_batch
from .training import TrainConfig, TrainLog, train, train_step
