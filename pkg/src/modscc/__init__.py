"""Multi-output deep-supervised classifier chains on a small numpy autodiff core."""
from ._kernels import BACKEND as KERNEL_BACKEND
from .backbone import BackboneConfig
from .heads import HeadConfig, PredictionBundle
from .losses import LossWeights, MO_DSCC_WEIGHTS, reduce_to_baseline, total_loss
from .models import MoDsCC, MultiModel, MultiOutputNet, PowersetNet, build_model
from .tensor import Parameter, Tape, Tensor
from .trainer import TrainConfig, fit

__version__ = "0.1.0"
