"""HJ 可达性工具包：网格与场、动力学、求解器、障碍物代数。"""
from reach.gridfield import FAR, Grid, ScalarField, TimeField, make_grid
from reach.reachops import ObstacleSchedule

__all__ = ["FAR", "Grid", "ScalarField", "TimeField", "make_grid", "ObstacleSchedule"]
