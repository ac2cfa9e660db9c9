from .config import *