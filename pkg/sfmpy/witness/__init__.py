from .witness_methods import *
