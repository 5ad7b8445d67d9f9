"""Write the built-in desk scene (or a rescaled copy) as a scene JSON file."""

from __future__ import annotations

import argparse

from app.services.scene import desk_scene, rasterize_scene, rescale_scene


def main() -> None:
    parser = argparse.ArgumentParser(description="Write the desk-scale block-building scene.")
    parser.add_argument("--out", default="desk_scene.json", help="Destination JSON path.")
    parser.add_argument(
        "--resolution", type=int, nargs=3, metavar=("NX", "NY", "NZ"), help="Rescale the grid."
    )
    args = parser.parse_args()

    scene = desk_scene()
    if args.resolution:
        scene = rescale_scene(scene, tuple(args.resolution))
    scene.dump(args.out)
    mask = rasterize_scene(scene)
    print(
        f"Wrote {args.out}: {mask.grid.describe()}, {len(scene.boxes)} buildings, "
        f"fluid fraction {mask.fluid_fraction:.3f}"
    )


if __name__ == "__main__":
    main()
