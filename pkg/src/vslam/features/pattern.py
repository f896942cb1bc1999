"""Fixed table of 256 binary-test point pairs (x1, y1, x2, y2).

Offsets are relative to the keypoint, lie inside a disc of radius 13 so the
rotated pattern stays inside the 31 px patch, and were drawn once from an
isotropic Gaussian (sigma = 31 / 5). Never regenerate: stored descriptors
depend on this exact table.
"""

import numpy as np

PATTERN = np.array(
    [
        [-4, 5, 2, 8],
        [2, -5, 2, -1],
        [6, -6, -1, 7],
        [6, -10, 12, -3],
        [3, -12, -3, -1],
        [4, -1, 7, 2],
        [-2, -3, 7, -5],
        [3, 3, -1, 11],
        [-2, 3, -9, 1],
        [-2, -3, -2, -4],
        [-12, 3, 1, 0],
        [4, -4, -6, -4],
        [1, -6, 9, 1],
        [-6, 10, -7, 2],
        [-9, 2, 8, -6],
        [-7, -4, -8, -10],
        [-6, 6, 1, 10],
        [4, 7, -1, 4],
        [3, 8, 1, -8],
        [-7, 4, 6, 2],
        [9, -7, -2, 4],
        [2, 7, 3, 12],
        [1, -2, -10, -8],
        [-7, -3, -2, 8],
        [-7, -2, 1, -1],
        [-6, 7, 1, -9],
        [5, -2, 8, 2],
        [-1, -8, -6, -2],
        [-5, 2, 7, -6],
        [-4, -4, 9, 2],
        [-3, 0, -9, -9],
        [-3, -9, 3, 3],
        [-1, 0, 2, 5],
        [4, 0, -4, -3],
        [0, 6, -3, -8],
        [-3, 1, 3, 1],
        [-3, 9, 6, 0],
        [-9, -1, 3, -1],
        [-3, 5, 10, 0],
        [-5, 5, -8, 5],
        [-1, 2, 4, 7],
        [11, -1, -2, 3],
        [6, -1, 1, 8],
        [0, 1, 0, -4],
        [-8, -7, -4, 11],
        [7, -10, 5, 4],
        [-2, 3, -5, 7],
        [0, -7, 4, -5],
        [0, -10, 0, 7],
        [7, 5, -6, -3],
        [0, 5, 7, 3],
        [-5, -4, -10, 1],
        [-3, -1, 7, -8],
        [7, -6, 6, -5],
        [3, 3, 0, 3],
        [-3, -1, 2, -5],
        [10, 3, -9, 2],
        [6, -5, 2, -6],
        [1, 0, -3, 2],
        [10, 1, 0, 10],
        [-3, 2, -7, -8],
        [6, -5, -10, -4],
        [1, -5, 4, 4],
        [-11, 1, 5, -6],
        [-1, 2, -2, -1],
        [-8, 6, -2, 7],
        [7, -2, -4, -6],
        [-7, -6, 4, 7],
        [3, 5, -1, 4],
        [-2, 0, 2, 10],
        [4, -5, 7, -8],
        [-2, 11, 1, -5],
        [3, -3, 1, -8],
        [-5, 12, -3, -1],
        [0, 1, 2, 5],
        [2, 7, 5, 7],
        [-4, 9, 0, -6],
        [5, 5, 1, 1],
        [9, 5, 5, 6],
        [11, 3, 0, 4],
        [-1, -3, 4, -6],
        [-2, 1, -12, 4],
        [-3, 8, 11, 1],
        [-8, -8, 0, 3],
        [-2, -10, -7, -4],
        [0, -1, -7, -2],
        [-2, 4, 2, 2],
        [-4, 1, 5, 12],
        [-5, -2, -6, 5],
        [-1, 5, 6, 5],
        [0, -4, 8, -3],
        [1, -3, 0, -2],
        [5, 2, -4, 3],
        [-11, 0, 2, 5],
        [1, -4, -12, 5],
        [8, -1, -4, 5],
        [4, -2, 6, 4],
        [2, 5, 11, 0],
        [1, -4, 10, -4],
        [-7, 3, 1, -2],
        [-1, -4, 7, 10],
        [-1, -10, 7, -3],
        [8, -7, 0, 2],
        [-2, -5, -4, 1],
        [-4, 4, -7, 0],
        [-2, 0, 7, -8],
        [-9, 5, 7, 7],
        [2, -4, 0, -1],
        [4, -10, 4, 1],
        [0, 3, -1, -3],
        [3, 10, -2, -9],
        [-6, -6, -5, 4],
        [-2, -4, 1, 4],
        [-11, -1, -7, -9],
        [-2, -1, -6, 7],
        [-5, 4, 1, 6],
        [-6, -1, -7, 5],
        [-3, 2, 9, -3],
        [0, 8, 2, -4],
        [-7, -2, -3, 10],
        [3, 7, -6, -8],
        [1, -6, 6, 8],
        [-5, 3, 6, 5],
        [-5, 3, 7, -1],
        [-2, 0, -1, 4],
        [2, 1, -10, 1],
        [11, -4, 3, 3],
        [-2, -7, -4, -3],
        [2, -9, -2, -4],
        [5, 1, 1, 3],
        [4, 9, -2, 0],
        [-1, 1, 0, 2],
        [-6, -1, -4, -3],
        [-9, 5, -6, 3],
        [-7, 3, -7, -2],
        [2, 1, -3, 1],
        [-3, 3, 4, -8],
        [2, 5, 0, 2],
        [-1, 3, 3, 6],
        [11, 4, 0, 1],
        [-4, -8, -3, 0],
        [5, 5, 8, 3],
        [-1, -1, 0, 1],
        [-9, 3, -9, 5],
        [-5, 0, 1, 4],
        [2, 1, 0, -5],
        [-5, 9, 9, 1],
        [1, 5, -2, -1],
        [-6, -4, 2, -5],
        [11, 3, 3, 3],
        [4, -1, -3, -1],
        [7, 3, 8, 0],
        [1, 9, 3, 0],
        [4, -5, 4, -6],
        [8, -3, 3, -10],
        [-8, 1, 1, 2],
        [-4, 3, -2, -5],
        [-6, 6, -3, -1],
        [-1, 3, -9, -5],
        [4, -5, -9, 5],
        [12, -4, 3, 4],
        [-6, -9, 4, 0],
        [6, 5, -1, 1],
        [2, -2, -2, 2],
        [-1, 1, -10, -1],
        [4, -2, -3, 3],
        [-4, 3, -4, 5],
        [12, 1, -4, 3],
        [-2, -4, -8, 5],
        [2, 7, -6, 2],
        [-12, -1, -9, 0],
        [2, -10, -9, 3],
        [-6, -1, -3, 8],
        [-8, 2, -8, -7],
        [-4, 4, 0, 3],
        [10, -2, -6, -1],
        [1, 5, 10, -5],
        [3, -7, 5, 3],
        [7, -2, 6, 0],
        [7, 0, -10, 7],
        [-3, 8, -1, 3],
        [4, -7, 5, -10],
        [0, -3, 8, -3],
        [1, 12, -10, -4],
        [7, -4, -6, -2],
        [2, 8, 1, 2],
        [6, 1, 3, -7],
        [-1, -9, -4, -2],
        [5, -1, 3, -6],
        [10, -2, -11, -5],
        [5, -8, 6, 4],
        [-4, 10, -8, 8],
        [-3, 9, 2, 7],
        [-3, 2, 1, 3],
        [6, -8, -3, 2],
        [-5, 2, 0, 2],
        [-2, -10, -2, 3],
        [-3, -3, 3, 9],
        [0, -8, 4, 7],
        [3, 2, -2, 4],
        [4, 7, -5, 10],
        [9, 4, -2, 3],
        [-2, -7, 1, 4],
        [1, -11, -2, 3],
        [6, 3, 2, 0],
        [3, 0, -7, 3],
        [8, 2, -1, -4],
        [-8, 1, 0, 2],
        [3, -11, 4, 7],
        [0, 7, -4, -3],
        [2, 4, 6, 1],
        [3, -2, 4, -2],
        [2, 3, -1, -9],
        [8, -4, 6, -2],
        [8, 5, -4, 6],
        [-2, -9, 6, -5],
        [6, 1, 5, -8],
        [0, 2, -9, -9],
        [0, -1, -1, 6],
        [6, 4, 0, -7],
        [-2, -5, 0, -1],
        [-2, 7, 7, -2],
        [2, 1, 7, -1],
        [5, -1, 4, 1],
        [-7, -4, -2, 4],
        [-10, -2, 4, -4],
        [11, 0, 2, 2],
        [1, -1, 4, -6],
        [-3, 3, 3, -4],
        [6, -3, 1, 2],
        [-2, -6, 2, -3],
        [5, 3, -6, -2],
        [-2, 3, -9, 7],
        [-6, -7, -3, -12],
        [0, 3, 3, 2],
        [1, -7, 2, 3],
        [-7, 2, -1, -2],
        [0, 12, 5, 8],
        [9, 3, -5, -9],
        [4, 2, 8, -3],
        [-2, -7, 2, -6],
        [-4, -1, -10, -4],
        [-7, -10, -4, -7],
        [0, 5, 7, -6],
        [-8, 4, 8, -7],
        [-6, 5, 1, 5],
        [3, 10, -2, -7],
        [-5, 2, 0, 1],
        [5, -11, -2, 7],
        [3, 4, -6, -2],
        [2, -3, 2, -5],
        [7, 6, -2, 2],
        [1, -3, -3, 3],
        [12, -3, 6, -9],
        [0, 9, -3, 2],
        [0, 3, 4, -9],
    ],
    dtype=np.int8,
)
