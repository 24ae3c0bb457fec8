"""Disjoint-set forests."""

from typing import List, Sequence


class UnionFind:
    """Union by size with path halving."""

    def __init__(self, size: int):
        self.parent = list(range(size))
        self.size = [1] * size
        self.components = size

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.components -= 1
        return True


class WindingUnionFind:
    """Union-find on a torus that tracks unwrapped offsets to each root.

    Closing a cycle whose offsets disagree by a multiple of the period along
    an axis means the component wraps around the torus in that direction.
    """

    def __init__(self, size: int, dimension: int, period: float):
        self.parent = list(range(size))
        self.offset: List[List[float]] = [[0.0] * dimension for _ in range(size)]
        self.wraps: List[List[bool]] = [[False] * dimension for _ in range(size)]
        self.size = [1] * size
        self.dimension = dimension
        self.period = period

    def find(self, x: int) -> int:
        path = []
        while self.parent[x] != x:
            path.append(x)
            x = self.parent[x]
        root = x
        # Compress, accumulating offsets from the top of the path down.
        for node in reversed(path):
            parent = self.parent[node]
            if parent != root:
                self.offset[node] = [a + b for a, b in zip(self.offset[node], self.offset[parent])]
            self.parent[node] = root
        return root

    def union(self, a: int, b: int, displacement: Sequence[float]):
        """Join a and b, where ``b`` sits at ``a + displacement`` when unwrapped."""
        ra, rb = self.find(a), self.find(b)
        oa, ob = self.offset[a], self.offset[b]
        if ra == rb:
            for axis in range(self.dimension):
                mismatch = oa[axis] + displacement[axis] - ob[axis]
                if abs(mismatch) > self.period / 2:
                    self.wraps[ra][axis] = True
            return
        # Position of rb relative to ra.
        shift = [oa[i] + displacement[i] - ob[i] for i in range(self.dimension)]
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
            shift = [-s for s in shift]
        self.parent[rb] = ra
        self.offset[rb] = shift
        self.size[ra] += self.size[rb]
        self.wraps[ra] = [x or y for x, y in zip(self.wraps[ra], self.wraps[rb])]

    def wrapping_roots(self, axis: int = 0) -> List[int]:
        return [x for x in range(len(self.parent)) if self.parent[x] == x and self.wraps[x][axis]]
