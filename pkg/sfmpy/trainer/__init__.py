from .replay_buffer import *
from .evaluation import *
from .behaviour_cloning import *
from .train_loop import *
