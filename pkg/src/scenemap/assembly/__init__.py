from .catalog import Asset, AssetCatalog, retrieve_asset, size_mse
from .geometry import (
    DOOR_HEIGHT,
    WALL_HEIGHT,
    WINDOW_SPAN,
    Opening,
    RoomMesh,
    build_room_mesh,
    floor_polygon_from_mask,
    openings_from_mask,
    point_in_polygon,
    polygon_area,
)
from .scene import (
    Placement,
    Scene3D,
    assemble_scene,
    export_scene,
    footprint_corners,
    footprint_extent,
    import_scene,
    local_size,
    room_from_mask,
    rotate,
    scene_from_json,
    scene_schema,
    scene_to_json,
    scene_to_obj,
)
