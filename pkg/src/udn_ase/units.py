"""Decibel and length conversions."""

import numpy as np


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_mw(dbm):
    return db_to_linear(dbm)


def m_to_km(m):
    return m / 1000.0
