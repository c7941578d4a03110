from .geometry import *
from .quadrature import *
from .basis import *
from .system import *
