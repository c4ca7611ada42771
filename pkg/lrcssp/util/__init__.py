from .linalg import *
from .serialize import *
