"""xLSTM sequence regressor with manual backpropagation.

Scalar-memory (sLSTM) and matrix-memory (mLSTM) cells with stabilized
exponential gating, block-diagonal projections, causal convolution,
pre-norm residual blocks, and an RMSE training loop. Gradients are
derived by hand and verified against central finite differences.
"""

from .model import XlstmConfig, XlstmModel
from .ops import block_diagonal_apply, causal_conv
from .cells import slstm_cell_step, mlstm_cell_step, SlstmState, MlstmState
from .train import (train, grad_check, rmse_loss, chunk_sequences,
                    save_model, load_model)

__all__ = [
    "XlstmConfig", "XlstmModel", "block_diagonal_apply", "causal_conv",
    "slstm_cell_step", "mlstm_cell_step", "SlstmState", "MlstmState",
    "train", "grad_check", "rmse_loss", "chunk_sequences",
    "save_model", "load_model",
]
