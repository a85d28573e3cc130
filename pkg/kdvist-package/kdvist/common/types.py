from typing import Literal, TypeAlias

# Side: which Faddeev function, normalized at x >= b (right) or x <= 0 (left)
Side: TypeAlias = Literal['left', 'right']
# SegmentTag: which piece of the contour a node belongs to
SegmentTag: TypeAlias = Literal['ray_left', 'rect_side_left', 'rect_top', 'rect_side_right', 'ray_right']
