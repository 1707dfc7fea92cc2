"""hplab: hierarchical |φ|⁴ plateau laboratory."""
__version__ = '0.1.0'
