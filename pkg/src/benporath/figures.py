"""Plot-ready data for the theory figures.

``figure_d1`` gives, per panel, the schooling (EQ1) and retirement (EQ2)
loci in the (s, R) plane; ``figure_d2`` gives the disutility of work and
the marginal benefit of working after displacement at several ages.

Column layout
-------------
fig_d1{a,b,c,d}.csv : ``s`` followed by ``R_eq1_<variant>`` / ``R_eq2_<variant>``;
    empty cells where a locus leaves the admissible region.
fig_d1_points.csv   : ``panel,point,s,R`` optimum markers (A ex-ante
    baseline, B ex-ante shocked, B' ex-post with schooling fixed).
fig_d2.csv          : ``series,R,value`` with series ``disutility`` and
    ``displaced_d=<d>``; ``inf`` where post-displacement consumption is not
    positive.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
import pandas as pd

from . import lifecycle as lc


def eq1_locus(prefs: lc.Preferences, tech: lc.Technology, s_grid, shock: lc.Shocks = None) -> np.ndarray:
    """Retirement age at which schooling ``s`` is optimal (closed-form inversion of EQ1)."""
    env = lc._Env(prefs, tech, shock)
    r = prefs.r
    out = np.full(len(s_grid), np.nan)
    for i, s in enumerate(s_grid):
        ratio = r / env.theta_prime(s)
        if ratio < 1:
            R = s + env.x - math.log(1.0 - ratio) / r
            if R < env.T:
                out[i] = R
    return out


def eq2_locus(prefs: lc.Preferences, tech: lc.Technology, s_grid, shock: lc.Shocks = None) -> np.ndarray:
    """Optimal retirement age for each schooling level."""
    env = lc._Env(prefs, tech, shock)
    out = np.full(len(s_grid), np.nan)
    for i, s in enumerate(s_grid):
        if s + env.x >= env.T - lc.EPS_T:
            continue
        R, corner = env.solve_R(float(s))
        if corner is None:
            out[i] = R
    return out


def d1_variants(prefs: lc.Preferences, wealth_drop: float = 1 / 3) -> dict:
    """Shock variants drawn in each D1 panel (panel -> {suffix: shock})."""
    return {
        "a": {"baseline": None},
        "b": {"baseline": None, "injury": lc.Injury(kappa=1.2)},
        "c": {"baseline": None, "captivity": lc.Captivity(x=0.1)},
        "d": {"baseline": None, "wage": lc.Displacement(theta_scale=0.9),
              "wealth": lc.Displacement(delta=lc.delta_for_consumption_drop(prefs, wealth_drop))},
    }


def figure_d1(prefs: lc.Preferences, tech: lc.Technology, s_grid: Sequence[float]) -> dict:
    """Loci frames per panel plus a points frame under key ``"points"``."""
    s_grid = np.asarray(s_grid, dtype=float)
    base = lc.solve_ex_ante(prefs, tech)
    frames = {}
    points = [("a", "A", base.s, base.R)]
    for panel, variants in d1_variants(prefs).items():
        cols = {"s": s_grid}
        for name, shock in variants.items():
            if not (panel == "d" and name == "wealth"):
                cols[f"R_eq1_{name}"] = eq1_locus(prefs, tech, s_grid, shock)
            cols[f"R_eq2_{name}"] = eq2_locus(prefs, tech, s_grid, shock)
            if shock is None or panel == "a":
                continue
            ex_ante = lc.solve_ex_ante(prefs, tech, shock)
            ex_post = lc.solve_ex_post(prefs, tech, shock, base.s)
            points.append((panel, f"B_{name}", ex_ante.s, ex_ante.R))
            points.append((panel, f"B'_{name}", ex_post.s, ex_post.R))
        frames[panel] = pd.DataFrame(cols)
    frames["points"] = pd.DataFrame(points, columns=["panel", "point", "s", "R"])
    return frames


def figure_d2(prefs: lc.Preferences, tech: lc.Technology, displaced_tech_scale: float,
              ages: Sequence[float] = (0.5, 0.55, 0.6), R_grid=None) -> pd.DataFrame:
    """Disutility and post-displacement marginal benefit curves over R."""
    plan = lc.solve_ex_ante(prefs, tech)
    if R_grid is None:
        R_grid = np.linspace(0.40, 0.95, 111)
    R_grid = np.asarray(R_grid, dtype=float)
    rows = [pd.DataFrame({"series": "disutility", "R": R_grid, "value": tech.f(R_grid, prefs.T)})]
    for d in ages:
        dp = lc.Displacement(d=d, theta_scale=displaced_tech_scale)
        mb = lc.marginal_benefit_after_displacement(prefs, tech, plan, dp, R_grid)
        mb = np.where(R_grid >= d, mb, np.nan)
        rows.append(pd.DataFrame({"series": f"displaced_d={d:g}", "R": R_grid, "value": mb}))
    return pd.concat(rows, ignore_index=True)
