"""Ben-Porath life-cycle model with endogenous retirement and war shocks,
synthetic cohort simulation, and the matching regression estimators."""

__version__ = "0.1.0"

from .lifecycle import (  # noqa: E402
    Captivity,
    Displacement,
    Injury,
    LifeCyclePlan,
    LinearLearning,
    Preferences,
    Technology,
    solve_ex_ante,
    solve_ex_post,
    solve_post_displacement_retirement,
)

__all__ = [
    "Captivity", "Displacement", "Injury", "LifeCyclePlan", "LinearLearning", "Preferences",
    "Technology", "solve_ex_ante", "solve_ex_post", "solve_post_displacement_retirement",
]
