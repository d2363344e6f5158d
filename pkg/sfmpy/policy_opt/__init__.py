from .actors import *
from .policy_gradients import *
