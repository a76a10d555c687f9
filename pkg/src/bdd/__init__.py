"""Treatment effect curves along an assignment boundary in a bivariate score.

Two estimators are provided: a local polynomial in the bivariate location
(:mod:`bdd.biv`) and a local polynomial in the signed distance to the
evaluation point (:mod:`bdd.dist`), with pointwise and uniform inference,
plug-in bandwidths and a Monte Carlo toolkit (:mod:`bdd.sim`).
"""

__version__ = "0.1.0"
