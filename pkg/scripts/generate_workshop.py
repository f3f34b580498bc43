#!/usr/bin/env python3
"""Regenerate the bundled workshop scene (src/raylaunch/data/workshop.json).

A 120 x 40 x 12 m production hall: concrete shell, two rows of steel
columns, overhead crane bridges, machine blocks along the main aisle,
storage racks, pallet stacks, cabinets and a handful of people. Layout is
deterministic (fixed RNG seed) so the committed JSON is reproducible.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from raylaunch.scene import (  # noqa: E402
    AntennaPattern,
    Obstacle,
    Scene,
    TransmitterSpec,
    save_scene,
    validate_scene,
)
from raylaunch.materials import default_materials  # noqa: E402


def box(name, x0, y0, z0, x1, y1, z1, material, diffracting=False):
    return Obstacle(
        name=name,
        box_min=np.array([x0, y0, z0], dtype=float),
        box_max=np.array([x1, y1, z1], dtype=float),
        material=material,
        diffracting=diffracting,
    )


def build() -> Scene:
    rng = np.random.default_rng(20240811)
    mats = default_materials()
    concrete, metal, wood = mats["concrete"], mats["metal"], mats["wood"]
    L, W, H = 120.0, 40.0, 12.0
    t = 0.3  # shell thickness

    obstacles = [
        box("floor", 0.0, 0.0, 0.0, L, W, t, concrete),
        box("roof", 0.0, 0.0, H - t, L, W, H, concrete),
        box("wall_south", 0.0, 0.0, t, L, t, H - t, concrete),
        box("wall_north", 0.0, W - t, t, L, W, H - t, concrete),
        box("wall_west", 0.0, t, t, t, W - t, H - t, concrete),
        box("wall_east", L - t, t, t, L, W - t, H - t, concrete),
    ]

    # two rows of steel columns carrying the crane rails
    for i, x in enumerate(np.arange(15.0, 115.0, 12.5)):
        for j, y in enumerate((8.0, 32.0)):
            obstacles.append(
                box(f"column_steel_{i}{j}", x - 0.2, y - 0.2, t, x + 0.2, y + 0.2, H - t,
                    metal, diffracting=True)
            )

    # four concrete columns around the office corner
    for i, (x, y) in enumerate([(100.0, 12.0), (100.0, 28.0), (110.0, 12.0), (110.0, 28.0)]):
        obstacles.append(
            box(f"column_concrete_{i}", x - 0.3, y - 0.3, t, x + 0.3, y + 0.3, H - t, concrete)
        )

    # crane bridges parked over the aisle
    for i, x in enumerate((42.0, 88.0)):
        obstacles.append(
            box(f"crane_bridge_{i}", x, 1.0, 9.2, x + 1.4, W - 1.0, 10.4, metal,
                diffracting=True)
        )

    # machine blocks along the south side of the main aisle
    for i, x in enumerate(np.arange(12.0, 96.0, 14.0)):
        d = rng.uniform(2.2, 3.4)
        w = rng.uniform(1.6, 2.4)
        h = rng.uniform(1.8, 2.8)
        y0 = 12.5 + rng.uniform(-0.5, 0.5)
        obstacles.append(
            box(f"machine_{i}", x, y0, t, x + d, y0 + w, t + h, metal, diffracting=True)
        )

    # storage racks (long steel shelves) along the north aisle
    for i, x in enumerate((20.0, 48.0, 76.0)):
        obstacles.append(
            box(f"rack_{i}", x, 25.0, t, x + 18.0, 26.2, t + 5.0, metal, diffracting=True)
        )

    # pallet stacks scattered in the logistics zone
    for i in range(12):
        x = rng.uniform(8.0, 112.0)
        y = rng.uniform(3.0, 10.0) if i % 2 else rng.uniform(18.0, 23.0)
        h = rng.uniform(0.8, 2.2)
        obstacles.append(
            box(f"pallets_{i}", x, y, t, x + 1.2, y + 1.0, t + h, wood)
        )

    # tool cabinets against the south wall
    for i, x in enumerate(np.arange(30.0, 100.0, 10.0)):
        obstacles.append(
            box(f"cabinet_{i}", x, t, t, x + 1.8, t + 0.6, t + 2.0, metal)
        )

    # pipe rack crossing the hall at mid height
    obstacles.append(box("pipe_rack", 60.0, 1.0, 5.6, 60.6, W - 1.0, 6.2, metal,
                         diffracting=True))

    humans = []
    spots = [(28.0, 18.0), (35.0, 22.5), (48.5, 17.0), (55.0, 21.0),
             (70.0, 19.0), (82.0, 23.0), (95.0, 18.5), (105.0, 20.5)]
    for i, (x, y) in enumerate(spots):
        sx, sy = 0.4, 0.25
        humans.append(
            box(f"worker_{i}", x - sx / 2, y - sy / 2, t, x + sx / 2, y + sy / 2, t + 1.7,
                mats["human"])
        )

    tx = TransmitterSpec(
        position=np.array([30.0, 20.0, 1.62]),
        power_dbm=0.0,
        frequency_hz=2.44e9,
        antenna=AntennaPattern(kind="monopole", peak_gain_dbi=2.15),
    )
    scene = Scene(
        bounds_min=np.zeros(3),
        bounds_max=np.array([L, W, H]),
        materials=mats,
        obstacles=obstacles,
        humans=humans,
        transmitters=[tx],
    )
    validate_scene(scene)
    return scene


if __name__ == "__main__":
    out = Path(__file__).resolve().parents[1] / "src" / "raylaunch" / "data" / "workshop.json"
    scene = build()
    save_scene(scene, out)
    print(f"wrote {out}: {len(scene.obstacles)} obstacles, {len(scene.humans)} humans")
