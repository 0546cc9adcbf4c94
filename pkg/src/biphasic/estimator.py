"""scikit-learn style entry point: ``fit`` solves on a mesh, ``predict``
evaluates the fields at points."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .assembly import LoadData, make_spaces
from .params import NondimParams
from .resistivity import Constant
from .verify import solve_model


class BiphasicSolver(BaseEstimator):
    """Solve the steady fluid/solid/pressure problem.

    Hyper-parameters are the dimensionless coefficients, the element
    pairing, the resistivity model and the iteration controls, so the
    estimator works with ``get_params``/``set_params``/``clone``.

    Attributes
    ----------
    solution_ : SolutionTriple
    report_ : PicardReport or None
        ``None`` when ``K`` does not depend on the iterate.
    """

    def __init__(self, lambda_=0.0, alpha1=1.0, alpha2=1.0, a0=1.0, Da=1.0, phi_f=0.5,
                 model=None, pairing="P2P1", tol=1e-8, max_iter=50, relaxation=1.0):
        self.lambda_ = lambda_
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.a0 = a0
        self.Da = Da
        self.phi_f = phi_f
        self.model = model
        self.pairing = pairing
        self.tol = tol
        self.max_iter = max_iter
        self.relaxation = relaxation

    def nondim_params(self):
        return NondimParams(self.lambda_, self.alpha1, self.alpha2, self.a0, self.Da, self.phi_f)

    def fit(self, mesh, data: LoadData | None = None):
        """Solve on ``mesh`` with load ``data``; returns self."""
        model = self.model if self.model is not None else Constant.identity(mesh.dim)
        self.spaces_ = make_spaces(mesh, self.pairing)
        kw = {} if model.iterate_independent else {"relaxation": self.relaxation}
        self.solution_, self.report_ = solve_model(
            self.spaces_, self.nondim_params(), data, model,
            tol=self.tol, max_iter=self.max_iter, **kw,
        )
        return self

    def predict(self, points):
        """Columns ``[V_f (d), U_s (d), P]`` at ``points``; NaN outside."""
        s = self.solution_
        return np.hstack([s.V_f(points), s.U_s(points), s.P(points)])
