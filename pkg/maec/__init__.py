__version__ = '0.1.0'

from .config import *
from .errors import *
from .estimators import *
from .experiments import *
from .fields import *
from .kernels import *
from .manifest import *
from .operators import *
from .sdmm import *
from .simulate import *
from .trace import *
