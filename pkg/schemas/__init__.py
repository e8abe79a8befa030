from .model import *
from .train import *
from .pruning import *
from .task import *
from .evaluation import *
from .run import *
