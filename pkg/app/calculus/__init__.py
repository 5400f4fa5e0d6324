"""Symbol calculus: grids, symbols, star products and expansions."""
