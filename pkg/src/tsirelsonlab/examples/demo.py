#!/usr/bin/env python3
"""A short tour: a norm with its certificate, a Jamesified norm and an α certificate."""

import logging
from fractions import Fraction

from tsirelsonlab import (
    DiagonalOperator,
    FamilySpec,
    Interval,
    alpha,
    jnorm,
    make_vector,
    norm,
)
from tsirelsonlab.constructions import coding_schedule


def main():
    s = coding_schedule(12)
    fam = FamilySpec.mixed(s)
    x = make_vector([(1, 1), (2, Fraction(1, 2)), (3, Fraction(-1, 4))])
    cert = norm(x, fam)
    print(f"‖x‖ = {cert.value}, certificate verifies: {cert.verify(x)}")
    print(f"Jamesified ‖x‖ = {jnorm(x, s).value}")
    D = DiagonalOperator({4: [Interval(1, 1), Interval(2, 3)]}, s)
    report = alpha(4, D, x, fam)
    print(f"‖D_4 x‖ = {report.image_norm} ≤ α_4(x) = {report.value} ≤ ‖x‖ = {report.norm}")


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    main()
