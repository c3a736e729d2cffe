"""Satisfiable formulas across the three theories, each with a short model."""

from conftest import make_signature

SIGNATURES = {
    "LRA": make_signature("LRA"),
    "LIA": make_signature("LIA", variables=("x", "y", "z")),
    "EUF": make_signature(
        "EUF", variables=("x", "y"), sorts=("S",),
        predicates={"p": ("S",), "r": ("S", "S")},
        functions={"f": (("S",), "S")},
    ),
}

SATISFIABLE = [
    ("LRA", "x > 0"),
    ("LRA", "x = y"),
    ("LRA", "x + y = 1 & x - y = 0"),
    ("LRA", "X (x > 1)"),
    ("LRA", "wX (x > 1)"),
    ("LRA", "F (x = 3)"),
    ("LRA", "G (x >= 0)"),
    ("LRA", "(x < 5) U (x = 5)"),
    ("LRA", "(y >= x) U (x = y)"),
    ("LRA", "next(x) = x + 1"),
    ("LRA", "x = 0 & X (x = 1) & X X (x = 2)"),
    ("LRA", "G (wnext(x) >= x) & F (x > 10)"),
    ("LRA", "(x > 0) R (y > 0)"),
    ("LRA", "F (x > y) & F (y > x)"),
    ("LRA", "x < 0 & F (x > 0)"),
    ("LRA", "G (x = y)"),
    ("LRA", "y = 1 & X (next(y) = 2 * y)"),
    ("LRA", "exists z:Real. ((x < z) & (z < y))"),
    ("LRA", "forall z:Real. ((z < x) | (z >= x))"),
    ("LRA", "(x > 0 | y > 0) & (x <= 0 | y <= 0)"),
    ("LRA", "F G (x = 1)"),
    ("LRA", "G F (x = 1)"),
    ("LRA", "x = 1 & G (wnext(x) = x + 1) & F (x = 4)"),
    ("LRA", "!(G (x > 0))"),
    ("LRA", "(x = 0) U ((x = 1) U (x = 2))"),
    ("LRA", "X X X (x + y = 7)"),
    ("LRA", "y = 2 * x & x > 3"),
    ("LIA", "x =mod2 1"),
    ("LIA", "(x =mod3 y) & x > y"),
    ("LIA", "G (x =mod2 0) & F (x > 5)"),
    ("LIA", "x = 0 & G (wnext(x) = x + 2) & F (x = 6)"),
    ("LIA", "x = 0 & ((x < 3) U (x = 3))"),
    ("LIA", "x + y = z & z > 10"),
    ("LIA", "2 * x = y + 1"),
    ("LIA", "F (x = y + z) & G (z >= 0)"),
    ("LIA", "next(x) = x - 1 & x = 0"),
    ("LIA", "x > 0 & y > 0 & x + y < 3"),
    ("LIA", "X (x =mod5 3)"),
    ("LIA", "G (x != z)"),
    ("LIA", "(x > y) R (z = 1)"),
    ("LIA", "x < 0 & F (x > 0) & G (wnext(x) = x + 1)"),
    ("EUF", "p(x)"),
    ("EUF", "p(x) & !p(y)"),
    ("EUF", "r(x, y) & !r(y, x)"),
    ("EUF", "f(x) = y & f(y) = x"),
    ("EUF", "F (p(x)) & G (x = y)"),
    ("EUF", "p(x) & X (!p(x))"),
    ("EUF", "F (p(next(x)))"),
    ("EUF", "G (wnext(x) = f(x))"),
    ("EUF", "x != y & f(x) = f(y)"),
    ("EUF", "exists z:S. (r(x, z) & !r(y, z))"),
    ("EUF", "p(x) U r(x, x)"),
    ("EUF", "G (p(x) | p(y)) & F (!p(x))"),
    ("EUF", "!(x = y) & X (x = y)"),
    ("EUF", "F (p(next(x)) & !p(x))"),
]
