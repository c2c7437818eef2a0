"""tileray: software ray tracing of arbitrarily large molecular scenes.

Scenes are proxy meshes whose membrane (shell) and interior (core) are
filled from Wang square/cube tiles at traversal time -- per-placement
geometry is never materialized; transforms are composed on the fly
inside a three-level hierarchy (scene prisms/grid boxes, tile instance
boxes, molecule atoms).
"""

from .bvh import Bvh, RepGrid, build_bvh, build_rep_grid, bvh_traverse
from .coregrid import CoreGridMeta, box_center, box_min, grid_traverse, point_to_box, ray_interval
from .geometry import (
    Aabb,
    Affine,
    Interval,
    Ray,
    affine_compose,
    affine_invert,
    barycentric_interp,
    ray_aabb,
    ray_sphere,
    ray_triangle,
    transform_ray,
)
from .meshio import load_obj
from .molecules import Atom, MoleculeType, build_atom_bvh, molecule_metrics, parse_pdb
from .render import (
    Camera,
    ClipPlane,
    Framebuffer,
    HitRecord,
    RenderConfig,
    clip_reject,
    instance_transform,
    jitter_rotation,
    render_frame,
    tile_frame_transform_shell,
    trace_core,
    trace_shell,
)
from .scene import Scene, build_scene
from .sceneio import load_scene
from .shell import (
    MeshInstance,
    Prism,
    ProxyMesh,
    build_adaptive_prisms,
    point_in_prism,
    ray_prism_intersect,
)
from .tiling import (
    MoleculeInstance,
    ReplicationArea,
    TilingRecipe2D,
    TilingRecipe3D,
    WangCubeTile,
    WangSquareTile,
    generate_recipe_2d,
    generate_recipe_3d,
    map_triangle,
    recipe_lookup_2d,
    recipe_lookup_3d,
    replication_area_dims,
)

__version__ = "0.1.0"
