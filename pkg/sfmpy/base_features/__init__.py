from .feature_learners import *
