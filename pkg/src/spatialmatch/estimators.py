"""Estimator-style wrappers: fit on drivers, predict a driver for each rider.

``fit(drivers)`` stores the supply side; ``predict(riders)`` returns, for each
rider, the index of its driver in the fitted array (``-1`` if unmatched).
``score`` is the negated total cost so that larger is better.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_nu, check_positions
from .market import ArrivalOrder, MarketInstance, arrival_order
from .offline import omniscient_match, omniscient_match_with_penalty, sorted_match
from .online import greedy_match


class _MatcherBase(BaseEstimator):
    def __init__(self, ell=1.0):
        self.ell = ell

    def fit(self, X, y=None):
        """Store driver positions ``X`` (1-D or a single column)."""
        self.drivers_ = check_positions(X, ell=self.ell, name="drivers")
        self.n_drivers_ = self.drivers_.size
        return self

    def _instance(self, X):
        check_is_fitted(self, "drivers_")
        return MarketInstance(check_positions(X, ell=self.ell, name="riders"), self.drivers_, self.ell)

    def match(self, X):
        """Full :class:`~spatialmatch.offline.Matching` for riders ``X``."""
        raise NotImplementedError

    def predict(self, X):
        return self.match(X).driver_of()

    def score(self, X, y=None):
        return -self.match(X).total_cost


class OmniscientMatcher(_MatcherBase):
    """Optimal offline matching, optionally with a per-rider skip penalty ``nu``.

    Parameters
    ----------
    ell : float
        Interval length.
    nu : float or None
        Skip penalty. ``None`` forces every rider to be matched.
    """

    def __init__(self, ell=1.0, nu=None):
        super().__init__(ell)
        self.nu = nu

    def match(self, X):
        instance = self._instance(X)
        nu = check_nu(self.nu)
        if nu is None:
            return omniscient_match(instance)
        return omniscient_match_with_penalty(instance, nu)


class SortedMatcher(_MatcherBase):
    """k-th smallest rider to k-th smallest driver; needs as many riders as drivers."""

    def match(self, X):
        return sorted_match(self._instance(X))


class GreedyMatcher(_MatcherBase):
    """Nearest-unmatched-driver assignment in arrival order.

    Parameters
    ----------
    ell : float
        Interval length.
    order : str
        Arrival strategy applied to the riders passed to ``predict``.
        ``"as-sampled"`` processes them in the given row order.
    random_state : int
        Seed for the ``"random"`` strategy.
    """

    def __init__(self, ell=1.0, order="as-sampled", random_state=0):
        super().__init__(ell)
        self.order = order
        self.random_state = random_state

    def match(self, X):
        instance = self._instance(X)
        order = arrival_order(instance, self.order, seed=self.random_state)
        return greedy_match(instance, order).matching

    def match_in_order(self, X, permutation):
        """Greedy matching with an explicit arrival permutation."""
        instance = self._instance(X)
        return greedy_match(instance, ArrivalOrder(permutation, "explicit")).matching
