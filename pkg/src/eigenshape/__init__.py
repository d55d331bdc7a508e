"""Level-set shape optimization of Dirichlet eigenvalue functionals."""
