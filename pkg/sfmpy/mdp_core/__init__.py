from .tabular_mdps import *
from .environments import *
from .oracles import *
from .rollouts import *
from .demonstrations import *
