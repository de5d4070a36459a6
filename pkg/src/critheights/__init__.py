"""Critical heights of polynomials in the shift locus."""

__version__ = "0.1.0"
