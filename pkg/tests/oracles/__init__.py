"""Independent reference computations used to freeze derived test values.

Nothing here imports the library's algorithms; only plain numpy, networkx
and the textbook formulas.
"""
