# Tolerancias geométricas
BOUNDARY_TOL = 1e-12
AREA_TOL = 1e-12
VORONOI_MERGE_TOL = 1e-10   # relativo a la separación media de semillas

# Factorizaciones densas de los proyectores: pivote < tol·‖fila‖ ⇒ singular
PIVOT_TOL = 1e-13

# Compuerta de las fuentes manufacturadas
SOURCE_GATE_TOL = 1e-6

# Órdenes VEM soportados
SUPPORTED_ORDERS = (1, 2)

# Familias de mallas
STRUCTURED_KINDS = ("triangle", "square", "nonconvex", "mixed")
VORONOI_KINDS = ("voronoi", "voronoi-smooth")
MESH_KINDS = STRUCTURED_KINDS + VORONOI_KINDS

# Esquemas CSV
STEP_LOG_COLUMNS = ["step", "t", "gummel_iters", "poisson_residual", "np1_residual", "np2_residual"]
STUDY_COLUMNS = ["level", "h", "NE", "field", "eL2", "eH1", "order_L2", "order_H1", "seconds"]

FIELDS = ("phi", "p1", "p2")
