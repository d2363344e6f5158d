from .mlp import *
from .adam import *
from .target_networks import *
from .checkpoints import *
from .gradient_checks import *
