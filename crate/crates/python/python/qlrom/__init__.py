from ._qlrom import (
    QlromError,
    QuadraticOperators,
    RomModel,
    cumulative_energy,
    energy_rank,
    main,
    run_pipeline,
)

__all__ = [
    "QlromError",
    "QuadraticOperators",
    "RomModel",
    "cumulative_energy",
    "energy_rank",
    "main",
    "run_pipeline",
]
