import math

import pytest

from jointdc.core import Pmf

# Reference values, evaluated once at 40 digits with mpmath from their
# definitions and frozen here. test_oracles.py re-derives every one of them
# without importing the package.
ORACLE = {
    # binary example: fair coin vs P1(1) = 3/4, theta=1, alpha=0.6, beta=0.5
    "q_example": 0.72195367623414117646,
    "efa_example": 0.10204851522123613511,
    "emd_example": 0.0020485152212361351096,
    # Chernoff point of (1/2,1/2) vs (1/4,3/4)
    "q_chernoff": 0.63092975357145743710,
    "e2_zero": 0.034688185232017459384,
    "H_p1": 0.56233514461880835029,
    "D_p1_p0": 0.13081203594113695913,
    "D_p0_p1": 0.14384103622589046372,
    "ec_free": 0.62381071636487139921,
    # e1 with theta=1, beta=0.4
    "e1_lambda": 0.12276997354347597256,
    "e1_q0": 0.46633187415855504069,
    "e1_value": 0.10912162117559352860,
    # ideal length and moment over all of {0,1}^2, theta=1
    "l_star_11": 0.91149278881665232665,
    "moment_n2": 3.4820508075688772935,
    "log_moment_n2": 1.2476214327297427984,
    # binomial tail: ones >= 15 out of 20 under a fair coin
    "tail_log": -3.8778760716703552693,
    "tail_prob": 0.020694732666015625,
    "hat_neg_l1": 5.0740453018540286572,
    "hat_llr": 1.8574265037454244370,
    "hhat_28": 0.50040242353818787953,
    "d_28": 0.19274475702175742988,
    "train_stat": 0.48699885989365252152,
    "train_d_self": 0.0070021066472149861851,
    "train_d_train": 0.0064014569973203718321,
    "log_univ_moment_n10": 6.5714557184525354538,
}


@pytest.fixture
def p0():
    return Pmf((0.5, 0.5))


@pytest.fixture
def p1():
    return Pmf((0.25, 0.75))


def close(a, b, tol):
    return math.isclose(a, b, rel_tol=0.0, abs_tol=tol)
