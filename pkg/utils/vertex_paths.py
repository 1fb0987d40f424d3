from typing import Iterable, List, Tuple

import numpy as np

Vertex = Tuple[int, ...]

ROOT: Vertex = ()
ROOT_LABEL = "∅"

# Heap layout: root has index 1, children of index i are 2i (the -1 child) and 2i+1 (the +1 child).
# Weights are stored for |v| >= 1 only, so the flat position of heap index i is i - 2.


def heap_index(vertex: Vertex) -> int:
    index = 1
    for step in vertex:
        index = 2 * index + (1 if step > 0 else 0)
    return index


def vertex_from_heap(index: int) -> Vertex:
    if index < 1:
        raise ValueError(f"heap index must be positive, got {index}")
    bits = bin(index)[3:]
    return tuple(1 if bit == "1" else -1 for bit in bits)


def level_offset(vertex: Vertex) -> int:
    """Position of the vertex among the 2^|v| vertices of its level, in lexicographic order"""
    return heap_index(vertex) - (1 << len(vertex))


def vertex_at(level: int, offset: int) -> Vertex:
    return vertex_from_heap((1 << level) + offset)


def flat_weight_slice(level: int) -> slice:
    """Slice of the flat weight array holding W_v for |v| = level"""
    return slice((1 << level) - 2, (1 << (level + 1)) - 2)


def level_signs(level: int) -> np.ndarray:
    """(2^level, level) matrix of the coordinates v_1..v_level of every vertex at that level"""
    offsets = np.arange(1 << level)[:, None]
    shifts = np.arange(level - 1, -1, -1)[None, :]
    return np.where((offsets >> shifts) & 1, 1, -1).astype(np.int8)


def is_ancestor(ancestor: Vertex, vertex: Vertex) -> bool:
    return len(ancestor) <= len(vertex) and vertex[: len(ancestor)] == ancestor


def path_label(vertex: Vertex) -> str:
    if not vertex:
        return ROOT_LABEL
    return ",".join("+1" if step > 0 else "-1" for step in vertex)


def parse_path(label: str) -> Vertex:
    label = label.strip()
    if label in ("", ROOT_LABEL):
        return ROOT
    steps = []
    for token in label.split(","):
        value = int(token)
        if value not in (-1, 1):
            raise ValueError(f"vertex coordinates are -1 or +1, got {token!r}")
        steps.append(value)
    return tuple(steps)


def level_vertices(level: int) -> List[Vertex]:
    return [vertex_at(level, offset) for offset in range(1 << level)]


def character(vertex: Vertex, indices: Iterable[int]) -> int:
    """Group character chi_F(v) = prod_{j in F} v_j"""
    value = 1
    for j in indices:
        value *= vertex[j - 1]
    return value
