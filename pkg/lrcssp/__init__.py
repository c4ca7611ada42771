cache_dir = None
jobs = 1

from lrcssp.error import *
from lrcssp.api import *
