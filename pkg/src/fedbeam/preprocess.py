"""Point-cloud to 2-D occupancy grid conversion.

The scene is quantized top-down into equal square cells. Cells holding at
least one cloud point are 1, free cells 0; the base-station cell is then
overwritten with -2 and the vehicle cell with -1 (vehicle wins every
collision). Height information is dropped, so the network input stays a
single fixed-size channel no matter how many points the scan returned.
"""

import logging
from dataclasses import dataclass

import numpy as np

__all__ = ["GridConfig", "OccupancyGrid", "lidar_to_grid", "grid_to_input", "default_grid"]

log = logging.getLogger(__name__)

CODE_FREE = 0
CODE_OCCUPIED = 1
CODE_VEHICLE = -1
CODE_BS = -2


@dataclass(frozen=True)
class GridConfig:
    """Axis-aligned crop box and its cell resolution. Cells must be square."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    cells_x: int
    cells_y: int

    def __post_init__(self):
        if self.x_max <= self.x_min or self.y_max <= self.y_min:
            raise ValueError("grid box is degenerate")
        if self.cells_x < 1 or self.cells_y < 1:
            raise ValueError("need at least one cell per axis")
        if abs(self.dx - self.dy) > 1e-9:
            raise ValueError(
                f"cells must be square: dx={self.dx!r} differs from dy={self.dy!r}"
            )

    @property
    def dx(self):
        return (self.x_max - self.x_min) / self.cells_x

    @property
    def dy(self):
        return (self.y_max - self.y_min) / self.cells_y

    @property
    def shape(self):
        return (self.cells_x, self.cells_y)

    def to_dict(self):
        return {
            "x_min": self.x_min,
            "x_max": self.x_max,
            "y_min": self.y_min,
            "y_max": self.y_max,
            "cells_x": self.cells_x,
            "cells_y": self.cells_y,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("x_min", "x_max", "y_min", "y_max", "cells_x", "cells_y")})


def default_grid():
    """20 x 200 cells over a 10 m x 100 m street box (0.5 m cells)."""
    return GridConfig(x_min=0.0, x_max=10.0, y_min=0.0, y_max=100.0, cells_x=20, cells_y=200)


@dataclass(frozen=True)
class OccupancyGrid:
    """Quantized scene with codes {0, 1, -1, -2}; exactly one vehicle cell."""

    cells: np.ndarray
    config: GridConfig

    def __post_init__(self):
        if self.cells.shape != self.config.shape:
            raise ValueError(
                f"cell array shape {self.cells.shape} does not match config {self.config.shape}"
            )
        codes = np.unique(self.cells)
        if not np.all(np.isin(codes, [CODE_BS, CODE_VEHICLE, CODE_FREE, CODE_OCCUPIED])):
            raise ValueError(f"grid holds codes outside {{0, 1, -1, -2}}: {codes}")
        if np.count_nonzero(self.cells == CODE_VEHICLE) != 1:
            raise ValueError("grid must mark exactly one vehicle cell")
        if np.count_nonzero(self.cells == CODE_BS) > 1:
            raise ValueError("grid may mark at most one base-station cell")


def _cell_index(coords, lo, hi, n_cells, delta):
    """Half-open binning with the upper box edge clamped into the last cell."""
    idx = np.floor((coords - lo) / delta).astype(np.int64)
    on_top_edge = coords == hi
    idx[on_top_edge] = n_cells - 1
    return idx


def lidar_to_grid(sample, cfg):
    """Quantize one sample's cloud and positions into an OccupancyGrid.

    Points outside the box are discarded (count reported at debug level).
    The vehicle must lie inside the box.
    """
    vx, vy = float(sample.vehicle_pos[0]), float(sample.vehicle_pos[1])
    if not (cfg.x_min <= vx <= cfg.x_max):
        raise ValueError(f"vehicle x={vx} outside grid box [{cfg.x_min}, {cfg.x_max}]")
    if not (cfg.y_min <= vy <= cfg.y_max):
        raise ValueError(f"vehicle y={vy} outside grid box [{cfg.y_min}, {cfg.y_max}]")

    cells = np.zeros(cfg.shape, dtype=np.int8)
    pts = np.asarray(sample.cloud, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0]:
        x, y = pts[:, 0], pts[:, 1]
        inside = (x >= cfg.x_min) & (x <= cfg.x_max) & (y >= cfg.y_min) & (y <= cfg.y_max)
        dropped = int(pts.shape[0] - np.count_nonzero(inside))
        if dropped:
            log.debug("lidar_to_grid: discarded %d of %d points outside the box", dropped, pts.shape[0])
        ix = _cell_index(x[inside], cfg.x_min, cfg.x_max, cfg.cells_x, cfg.dx)
        iy = _cell_index(y[inside], cfg.y_min, cfg.y_max, cfg.cells_y, cfg.dy)
        cells[ix, iy] = CODE_OCCUPIED

    bx, by = float(sample.bs_pos[0]), float(sample.bs_pos[1])
    if cfg.x_min <= bx <= cfg.x_max and cfg.y_min <= by <= cfg.y_max:
        bix = _cell_index(np.array([bx]), cfg.x_min, cfg.x_max, cfg.cells_x, cfg.dx)[0]
        biy = _cell_index(np.array([by]), cfg.y_min, cfg.y_max, cfg.cells_y, cfg.dy)[0]
        cells[bix, biy] = CODE_BS

    vix = _cell_index(np.array([vx]), cfg.x_min, cfg.x_max, cfg.cells_x, cfg.dx)[0]
    viy = _cell_index(np.array([vy]), cfg.y_min, cfg.y_max, cfg.cells_y, cfg.dy)[0]
    cells[vix, viy] = CODE_VEHICLE

    return OccupancyGrid(cells=cells, config=cfg)


def grid_to_input(grid):
    """Single-channel float tensor (1, cells_x, cells_y); codes kept raw."""
    return grid.cells.astype(np.float32)[np.newaxis, :, :]
