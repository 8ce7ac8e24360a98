import numpy as np

from stagetune.plant import SystemModel


class LinearTestPlant(SystemModel):
    """Six decoupled first-order channels: xdot_i = -a x_i + b u_i.

    Fully measured (C = I), unbounded inputs.  The closed loop with a pure
    proportional controller has an exact zero-order-hold recursion, which
    the control tests use as an oracle.
    """

    n_x = 6
    n_u = 6

    def __init__(self, a=0.8, b=1.5):
        self.a = a
        self.b = b
        self.C = np.eye(6)
        self.input_lo = np.full(6, -np.inf)
        self.input_hi = np.full(6, np.inf)
        self._check_measurement_matrix()

    def derivative(self, x, u):
        return -self.a * np.asarray(x, dtype=float) + self.b * np.asarray(u, dtype=float)
