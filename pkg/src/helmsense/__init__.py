"""Shape and topological sensitivities of a Helmholtz tracking functional, with P1 finite elements."""
from .errors import (ConfigError, DomainError, HelmsenseError, HoleTooCloseError, MeshError, NumericalError,
                     PointOutsideMeshError, ResonanceError, SingularJacobianError, UnknownTagError)
from .geometry import (Domain, RectifiableSet, TransportMap, VelocityField, affine_field, b_prime_zero,
                       bubble_field_1d, dilation_field, pullback_matrix, quadratic_field_2d, rotation_field,
                       transport, zero_field)
from .mesh import Mesh, generate_mesh, hole_meshes, read_mesh, write_mesh
from .fem import FemField, LinearSystem, assemble, boundary_integral, error_norms, eval_field, norms, solve
from .states import (Func, ProblemData, example_1d, solve_adjoint, solve_direct, solve_direct_pullback, solve_hole,
                     solve_source_perturbed, trivial_data)
from .shape import ShapeSensitivityReport, eval_J, fd_shape_check, remainder_R_shape, shape_derivative
from .topo import (CorrectorProbe, HoleFamily, PullbackFamily, SourceFamily, TopoSensitivityReport,
                   corrector_bound_probe, topo_hole, topo_source)
from .oracle1d import Oracle1DConfig, remainder_series_exact

__version__ = "0.1.0"
