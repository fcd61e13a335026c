"""Walk one trajectory through the grid codec and back.

    python demos/codec_tour.py
"""
import numpy as np

from trajcnn import codec
from trajcnn.data import FS_NYC_BBOX
from trajcnn.toy import SyntheticToySpec, make_toy_dataset

spec = codec.NormalizationSpec.from_bbox(FS_NYC_BBOX)
traj = make_toy_dataset(SyntheticToySpec(per_cluster=1))[0]
print(f"{traj.id}: {len(traj)} points, first {traj.points[0]}")

grid = codec.encode(traj, spec)
print("encoded grid", grid.values.shape, "filled cells", int(grid.mask.sum()))

up = codec.upsample(grid).values
print("network-sized image", up.shape)

# the generator sees 24x24 images; decoding reads back the top-left pixel of each 2x2 block
back = codec.decode(codec.downsample(up), spec, len(traj))
err = np.abs(back.points[:, :2] - traj.points[:, :2]).max()
print(f"round trip: max lat/lon error {err:.2e}, day/hour equal {np.array_equal(back.points[:, 2:], traj.points[:, 2:])}")
