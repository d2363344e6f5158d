from .config import *
from .verification import *
from .plot_data import *
from .commands import *
