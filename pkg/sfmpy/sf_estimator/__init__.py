from .sf_networks import *
