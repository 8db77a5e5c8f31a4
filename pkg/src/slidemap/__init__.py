"""Long-term landslide mapping from multi-seasonal optical composites,
terrain slope and harmonized nighttime lights.

The package is organized around a small raster data model (`raster`),
feature construction (`features`, `ntl`), spatially constrained sampling
(`sampling`), a from-scratch random forest (`forest`), replicated accuracy
assessment and class-ratio optimization (`evaluation`), change-chronology
metrics (`chronology`), a deterministic synthetic-world generator
(`synthworld`) and a batch pipeline with reports (`pipeline`, `reports`,
`cli`).
"""

__version__ = "0.1.0"

from .errors import (
    SlidemapError,
    ConfigError,
    DataError,
    StatsError,
)

__all__ = [
    "__version__",
    "SlidemapError",
    "ConfigError",
    "DataError",
    "StatsError",
]
