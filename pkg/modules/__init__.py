"""
Modules package for shrinkage-regularized contrastive clustering
"""
