"""
bayes_adapt: 前馈分类器的贝叶斯自适应(LIN/LHN/LON adapter, 经验贝叶斯先验, KLD, 两层树先验)
"""
from .pipeline import BayesAdaptPipeline

__version__ = "0.1.0"

__all__ = ["BayesAdaptPipeline", "__version__"]
