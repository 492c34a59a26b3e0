"""voxelink: interactive volumetric segmentation engine."""

from .errors import (
    VoxelinkError,
    EmptyStack,
    DimensionMismatch,
    UnsupportedPixelFormat,
    DecodeError,
    InvalidWindow,
    IndexOutOfRange,
    IoError,
    DegenerateRay,
    ShapeMismatch,
    Cancelled,
    DegenerateTriangle,
    UnknownSession,
    SchemaError,
    NoMeshYet,
)
from .volume import (
    VoxelVolume,
    MaskVolume,
    SliceImage,
    SliceCache,
    load_tiff_stack,
    load_mask_stack,
    export_mask_stack,
    get_slice,
    normalize_to_8bit,
    preload_window,
)
from .annotation import (
    CanvasPlane,
    StylusSample,
    Stroke,
    EditRecord,
    EditJournal,
    project_sample,
    interpolate_points,
    stamp_brush,
    apply_stroke,
    composite_overlay,
)
from .surface import (
    DensityGrid,
    MCConfig,
    TriangleMesh,
    ExtractionProgress,
    ExtractionState,
    CancelToken,
    build_density_grid,
    march_cube,
    extract_isosurface,
    update_region,
)
from .meshopt import (
    DecimationConfig,
    DecimationResult,
    LodLadder,
    dedupe_vertices,
    compute_vertex_quadrics,
    collapse_cost,
    decimate,
    build_lod_ladder,
    select_lod,
    write_stl,
    write_obj,
)

__version__ = "0.1.0"
