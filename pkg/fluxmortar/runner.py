"""
Run orchestration: turns a validated RunConfig into solves, rate tables,
field exports and the run manifest.
"""
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings
from scipy.spatial import cKDTree

from . import verify
from .ddsolver import DDSystem, Problem, monolithic_solve, solve
from .exceptions import AcceptanceError, ConfigError, ConvergenceError, FluxMortarError
from .exports import export_fields, write_manifest
from .mesh import decompose, generate_structured, refine_times, resolution_for
from .mortar import MortarSpace
from .permeability import Permeability, anisotropic_tensor

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-8
ORACLE_SOLVER_TOL = 1e-12


@dataclass
class RunResult:
    mode: str
    exit_code: int = 0
    artifacts: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    manifest: Path = None


def jsonable(value):
    """Manifest-safe copy: arrays to lists, non-finite floats to None."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.integer, np.bool_)):
        return value.item()
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, Path):
        return str(value)
    return value


def settings_payload(config):
    """Effective settings, defaults included, without loaded raster values."""
    payload = config.as_dict()
    payload['permeability'] = {k: v for k, v in payload['permeability'].items() if k != 'values'}
    payload['source'] = config.path
    return payload


def constant_tensor(perm):
    if perm['kind'] == 'tensor':
        kxx, kxy, kyy = perm['tensor']
        return np.array([[kxx, kxy], [kxy, kyy]])
    if perm['kind'] == 'scalar':
        return anisotropic_tensor(perm['value'], perm['anisotropy'], perm['angle'])
    return None


def build_permeability(config):
    perm = config['permeability']
    if perm['kind'] == 'raster':
        return Permeability('raster', raster=perm['values'], shape=perm['raster_shape'],
                            extent=tuple(config['domain.extent']),
                            anisotropy=perm['anisotropy'], angle=perm['angle'])
    return Permeability('tensor', tensor=constant_tensor(perm))


def build_case(config):
    """Manufactured case matching the configured problem, or None when no exact solution is known."""
    problem = config['problem']
    extent = tuple(config['domain.extent'])
    K = constant_tensor(config['permeability'])
    if problem['kind'] == 'linear' and K is not None:
        a, b, c = problem['gradient']
        return verify.linear_case(a, b, c, K=K, extent=extent)
    if problem['kind'] == 'example1':
        case = verify.example1_case()
        case.extent = extent
        return case
    return None


def pressure_drop_problem(extent, drop):
    """Pressure `drop` on the right side, zero on the left, no flow through top and bottom."""
    x0, x1 = extent[0], extent[1]
    return Problem(
        source=lambda x, y: 0.0 * x,
        pressure=lambda x, y: drop * (x - x0) / (x1 - x0),
        velocity=lambda x, y: (0.0 * x, 0.0 * y),
        neumann_sides=frozenset({'bottom', 'top'}),
    )


def exact_solution_applies(config, case):
    """True when the configured permeability is the constant tensor the case was derived for."""
    if case is None or config['problem.kind'] == 'pressure-drop':
        return False
    K = constant_tensor(config['permeability'])
    return K is not None and np.allclose(K, case.K)


def build_problem(config, case):
    if config['problem.kind'] == 'pressure-drop':
        return pressure_drop_problem(config['domain.extent'], config['problem.drop'])
    if case is None:
        raise ConfigError(
            f'problem.kind = {config["problem.kind"]} needs a constant permeability.',
            {'line': config.lines.get('problem.kind')},
        )
    return case.problem()


def _resolution(config):
    resolution = list(config['mesh.resolution'])
    return resolution[0] if len(resolution) == 1 else resolution


def _refinements(config):
    base = config['mesh.refinements']
    local = config['mesh.local_refinements']
    if not local:
        return base
    return [base + k for k in local]


def build_decomposition(config):
    return decompose(config['domain.extent'], config['domain.subdomains'], _resolution(config),
                     config['mesh.element'], refinements=_refinements(config))


def dd_system(config, decomposition, space, permeability, problem, tol=None):
    return DDSystem(
        decomposition, permeability, space, problem,
        variant=config['projection'],
        eta=config['mpfa.eta'],
        tol=config['solver.tol'] if tol is None else tol,
        max_it=config['solver.max_it'],
        method=config['solver.method'],
        workers=config['solver.workers'],
        sigma_reject=settings.FLUXMORTAR['SIGMA_MIN_REJECT'],
    )


def decomposition_summary(decomposition, space, system):
    return {
        'subdomains': len(decomposition),
        'interfaces': len(decomposition.interfaces),
        'cells': decomposition.num_cells,
        'h_min': decomposition.h_min,
        'mortar': repr(space),
        'mortar_dofs': space.dim,
        'floating': list(system.floating),
        'assembly_time': system.assembly_time,
    }


def solution_errors(decomposition, system, solution, case):
    return {
        'e_u': verify.error_flux_dd(decomposition, solution.fluxes, case),
        'e_p': verify.error_pressure_dd(decomposition, solution.pressures, case),
        'e_p_centers': verify.error_pressure_centers_dd(decomposition, solution.pressures, case),
        'e_lambda': verify.error_mortar(decomposition, system.space, solution.mortar, case),
        'e_Qlambda': verify.error_projected_mortar(decomposition, system.coupling, solution.mortar, case),
    }


def run_convergence(config, out_dir, result):
    case = build_case(config)
    if case is None:
        raise ConfigError('Convergence studies need problem.kind example1 or linear with constant permeability.',
                          {'line': config.lines.get('problem.kind')})
    if not exact_solution_applies(config, case):
        logger.warning('Convergence study uses K = %s from the %s case, not the configured permeability.',
                       case.K.tolist(), case.name)
    study = verify.StudySettings(
        levels=config['study.levels'],
        element_kind=config['mesh.element'],
        variant=config['projection'],
        extent=tuple(config['domain.extent']),
        subdomains=tuple(config['domain.subdomains']),
        resolution=_resolution(config),
        refinements=_refinements(config),
        mortar_cells=config['mortar.cells'],
        mortar_degree=config['mortar.degree'],
        mortar_continuous=config['mortar.continuous'],
        tol=config['solver.tol'],
        max_it=config['solver.max_it'],
        workers=config['solver.workers'],
        eta=config['mpfa.eta'],
        sigma_reject=settings.FLUXMORTAR['SIGMA_MIN_REJECT'],
    )
    table, reports = verify.convergence_study(study, case)
    rates = table.write_csv(out_dir / 'rates.csv')
    precise = table.write_csv(out_dir / 'rates_precise.csv', precise=True)
    result.artifacts += [rates, precise]
    result.summary.update({'case': case.name, 'table': table.as_dicts(), 'levels': reports})
    failed = [row for row in reports if not row['converged']]
    if failed:
        raise ConvergenceError(
            f'{len(failed)} of {len(reports)} levels did not converge.',
            details={'levels': [row['level'] for row in failed]},
        )


def run_solve(config, out_dir, result):
    case = build_case(config)
    problem = build_problem(config, case)
    permeability = build_permeability(config)
    decomposition = build_decomposition(config)
    space = MortarSpace.build(decomposition, config['mortar.cells'], config['mortar.degree'],
                              config['mortar.continuous'])
    with dd_system(config, decomposition, space, permeability, problem) as system:
        solution = solve(system)
        result.summary['decomposition'] = decomposition_summary(decomposition, space, system)
        result.summary['report'] = solution.report.as_dict()
        pressures = np.concatenate(solution.pressures)
        result.summary['pressure_range'] = [pressures.min(), pressures.max()]
        if exact_solution_applies(config, case):
            result.summary['errors'] = solution_errors(decomposition, system, solution, case)
    meshes = [sub.mesh for sub in decomposition]
    result.artifacts.append(export_fields(meshes, solution.pressures, solution.fluxes, out_dir / 'fields.vtk'))
    return decomposition, solution


def run_demo_raster(config, out_dir, result):
    decomposition, solution = run_solve(config, out_dir, result)
    drop = config['problem.drop']
    low, high = result.summary['pressure_range']
    bounded = bool(min(0.0, drop) - 1e-12 <= low and high <= max(0.0, drop) + 1e-12)
    result.summary['maximum_principle'] = bounded
    if not bounded:
        logger.warning('Pressure range [%.3e, %.3e] leaves the boundary data range [0, %.3e].', low, high, drop)
    result.summary['monolithic'] = compare_fine_reference(config, decomposition, solution)
    logger.info('Raster demo: %d iterations, pressure range [%.3e, %.3e], max |p_DD - p_fine| = %.3e',
                solution.report.iterations, low, high, result.summary['monolithic']['max_pressure_difference'])


def _cell_centers(meshes):
    return np.vstack([mesh.cell_centers for mesh in meshes])


def outer_sides(sub):
    return {f: key for f, (kind, key) in sub.facet_owner.items() if kind == 'outer'}


def side_outflux(sides_per_mesh, fluxes, side):
    """Total outward flux through one side of the domain box."""
    total = 0.0
    for sides, u in zip(sides_per_mesh, fluxes):
        total += float(u[[f for f, s in sides.items() if s == side]].sum())
    return total


def fine_reference_mesh(config):
    """Conforming mesh of the whole domain at the finest subdomain resolution."""
    nx, ny = config['domain.subdomains']
    resolution = _resolution(config)
    refinements = _refinements(config)
    if np.isscalar(refinements):
        refinements = [refinements] * (nx * ny)
    finest = max(max(resolution_for(resolution, k, (k % nx, k // nx))) * 2 ** refinements[k]
                 for k in range(nx * ny))
    return generate_structured(config['domain.extent'], nx * finest, ny * finest, config['mesh.element'])


def compare_fine_reference(config, decomposition, solution):
    """
    Single-domain solve on the finest grid with the same permeability and
    boundary data. DD cells are compared with the fine cell nearest their center.
    """
    mesh = fine_reference_mesh(config)
    problem = build_problem(config, build_case(config))
    p_mono, u_mono, _ = monolithic_solve(mesh, build_permeability(config), problem, config['mpfa.eta'])
    meshes = [sub.mesh for sub in decomposition]
    _, index = cKDTree(mesh.cell_centers).query(_cell_centers(meshes))
    difference = np.concatenate(solution.pressures) - p_mono[index]
    areas = np.concatenate([m.cell_areas for m in meshes])
    dd_sides = [outer_sides(sub) for sub in decomposition]
    mono_sides = [mesh.boundary_side(mesh.bounding_box)]
    return {
        'cells': mesh.num_cells,
        'max_pressure_difference': float(np.abs(difference).max()),
        'l2_pressure_difference': float(np.sqrt(areas @ difference ** 2)),
        'outflux': {
            side: {'dd': side_outflux(dd_sides, solution.fluxes, side),
                   'monolithic': side_outflux(mono_sides, [u_mono], side)}
            for side in ('left', 'right')
        },
    }


def run_oracle(config, out_dir, result):
    """Matching grids, mortar equal to the trace space: the DD solution must equal the monolithic one."""
    case = build_case(config)
    problem = build_problem(config, case)
    permeability = build_permeability(config)
    decomposition = build_decomposition(config)
    n = int(config['mesh.resolution'][0]) * 2 ** config['mesh.refinements']
    space = MortarSpace.build(decomposition, n, degree=0, continuous=False)
    tol = min(config['solver.tol'], ORACLE_SOLVER_TOL)
    with dd_system(config, decomposition, space, permeability, problem, tol=tol) as system:
        solution = solve(system)
        result.summary['decomposition'] = decomposition_summary(decomposition, space, system)
        result.summary['report'] = solution.report.as_dict()

    nx, ny = config['domain.subdomains']
    cells = config['mesh.resolution'][0]
    mesh = generate_structured(config['domain.extent'], nx * cells, ny * cells, 'quad')
    mesh = refine_times(mesh, config['mesh.refinements'])
    p_mono, u_mono, _ = monolithic_solve(mesh, permeability, problem, config['mpfa.eta'])

    meshes = [sub.mesh for sub in decomposition]
    distance, index = cKDTree(mesh.cell_centers).query(_cell_centers(meshes))
    facet_distance, facet_index = cKDTree(mesh.facet_centers).query(np.vstack([m.facet_centers for m in meshes]))
    if max(distance.max(), facet_distance.max()) > decomposition.tolerance:
        raise AcceptanceError('Subdomain cells do not match the global grid.',
                              {'distance': float(max(distance.max(), facet_distance.max()))})
    pressure_difference = float(np.abs(np.concatenate(solution.pressures) - p_mono[index]).max())
    # subdomain and global facet normals agree up to sign
    normals = np.vstack([m.facet_normals for m in meshes])
    orientation = np.einsum('ij,ij->i', normals, mesh.facet_normals[facet_index])
    flux_difference = float(np.abs(np.concatenate(solution.fluxes) * orientation - u_mono[facet_index]).max())
    difference = max(pressure_difference, flux_difference)
    result.summary['oracle'] = {
        'max_pressure_difference': pressure_difference,
        'max_flux_difference': flux_difference,
        'max_difference': difference,
        'tolerance': ORACLE_TOL,
    }
    logger.info('max |p_DD - p_mono| = %.3e, max |u_DD - u_mono| = %.3e', pressure_difference, flux_difference)
    result.artifacts.append(export_fields(meshes, solution.pressures, solution.fluxes, out_dir / 'fields.vtk'))
    if difference > ORACLE_TOL:
        raise AcceptanceError(
            f'DD and monolithic solutions differ by {difference:.3e} (> {ORACLE_TOL:.0e}).',
            {'max_pressure_difference': pressure_difference, 'max_flux_difference': flux_difference},
        )


MODES = {
    'convergence': run_convergence,
    'solve': run_solve,
    'oracle-compare': run_oracle,
    'demo-raster': run_demo_raster,
}


def run(config, output_dir=None):
    """
    Execute the configured mode and write its artifacts plus `manifest.json`
    to the output directory. Errors are recorded in the manifest and re-raised.
    """
    out_dir = Path(output_dir or config['output.dir'])
    out_dir.mkdir(parents=True, exist_ok=True)
    result = RunResult(config.mode)
    started = time.perf_counter()
    logger.info('Running %s (config %s, output %s)', config.mode, config.path or '<string>', out_dir)
    try:
        MODES[config.mode](config, out_dir, result)
    except FluxMortarError as exc:
        result.exit_code = exc.exit_code
        envelope = exc.as_dict()
        envelope['data'] = jsonable({
            'mode': config.mode,
            'settings': settings_payload(config),
            'artifacts': result.artifacts,
            **result.summary,
        })
        result.manifest = write_manifest(out_dir / 'manifest.json', envelope, success=False)
        logger.error('%s failed: %s', config.mode, exc.message)
        raise
    payload = {
        'mode': config.mode,
        'settings': settings_payload(config),
        'elapsed': time.perf_counter() - started,
        'artifacts': result.artifacts,
        **result.summary,
    }
    result.manifest = write_manifest(out_dir / 'manifest.json', jsonable(payload))
    result.artifacts.append(result.manifest)
    logger.info('%s finished in %.2fs', config.mode, payload['elapsed'])
    return result
