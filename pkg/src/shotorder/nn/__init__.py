from .config import CATEGORIES, CATEGORY_CLASSES, GENRES, CinematologyInput, ModelConfig
from .model import ShotOrderTransformer, collate_cinematology, parameter_count
