"""Geometry primitives with a rendering base class."""

UNIT = 1.0


class Shape:
    """Base shape with naive rendering."""

    def area(self):
        """Surface area; subclasses override."""
        return 0.0

    def render(self):
        """One-line textual description of the shape."""
        return f"shape area={self.area():.2f}"


class Square(Shape):
    """Axis-aligned square."""

    def __init__(self, side):
        self.side = side

    def area(self):
        """Side squared."""
        return self.side * self.side

    def render(self):
        """Prefix the base rendering with the shape name."""
        return "square " + super().render()
