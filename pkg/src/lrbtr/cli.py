"""Command-line entry point: ``lrbtr run|fom-only|tr-only|validate``."""
import argparse
import logging
import sys

import numpy as np

from . import bench
from .coeff import thermal_block_diffusion, thermal_block_space
from .fom import FullOrderModel
from .grid import BOUNDARY, build_mesh
from .lrbm import ReducedModel, pou_functions

ALGORITHMS = {'run': ('BFGS-FOM', 'TR-LRBM'), 'fom-only': ('BFGS-FOM',), 'tr-only': ('TR-LRBM',)}


def _config(args):
    cfg = bench.preset(args.preset)
    if args.config:
        cfg = bench.load_config(args.config, base=cfg)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out:
        cfg.out = args.out
    return cfg.validate()


def invariant_checks(n_H=4, s=3):
    """Cheap structural checks on a small problem; yields ``(name, ok, detail)``."""
    mesh = build_mesh(n_H, s)
    faces = mesh.faces
    perim = faces.length * faces.count(BOUNDARY)
    yield 'boundary perimeter', abs(perim - 4.0) < 1e-12, f'{perim!r}'
    sym = all(i in mesh.patch(j).members for i in range(mesh.num_subdomains)
              for j in mesh.patch(i).members)
    yield 'patch symmetry', sym, ''
    dev = float(np.abs(pou_functions(mesh).sum(axis=2) - 1).max())
    yield 'partition of unity', dev < 1e-12, f'max deviation {dev:.1e}'

    fom = FullOrderModel(mesh, thermal_block_diffusion(4, 12, seed=0), thermal_block_space())
    mu = fom.space.sample(np.random.default_rng(0))
    fom.set_objective(1.0, 1e-2, mu)
    rm = ReducedModel(fom)
    rm.enrich_local(mu)
    nb = {j: set(mesh.neighbors(j)) | {j} for j in range(mesh.num_subdomains)}
    zero = all(not np.any(rm.block(i, j)) for i in nb for j in range(mesh.num_subdomains) if j not in nb[i])
    yield 'reduced locality', zero, ''
    sol = fom.solve(mu)
    rm.enrich_global(sol.u, sol.p)
    e = sol.u - rm.reconstruct(rm.solve_primal(mu))
    rel = fom.product.norm(e) / fom.product.norm(sol.u)
    yield 'Galerkin reproduction', rel < 1e-8, f'relative energy error {rel:.1e}'


def main(argv=None):
    parser = argparse.ArgumentParser(prog='lrbtr', description=__doc__)
    parser.add_argument('command', choices=['run', 'fom-only', 'tr-only', 'validate'])
    parser.add_argument('--config', help='flat key = value config file')
    parser.add_argument('--preset', default='desk', choices=sorted(bench.PRESETS))
    parser.add_argument('--out', help='output directory')
    parser.add_argument('--seed', type=int, help='base seed for field, desired and initial parameter')
    parser.add_argument('--print-config', action='store_true', help='print the resolved config and exit')
    parser.add_argument('-v', '--verbose', action='store_true')
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        cfg = _config(args)
    except (bench.ConfigError, OSError) as e:
        print(f'config error: {e}', file=sys.stderr)
        return 2
    if args.print_config:
        sys.stdout.write(bench.format_config(cfg))
        return 0
    if args.command == 'validate':
        failed = 0
        for name, ok, detail in invariant_checks():
            print(f'{"PASS" if ok else "FAIL"}  {name}  {detail}'.rstrip())
            failed += not ok
        return 1 if failed else 0
    fom, reports = bench.run_benchmark(cfg, ALGORITHMS[args.command])
    text = bench.write_reports(cfg, reports, fom.spec.mu_d)
    sys.stdout.write(text)
    for r in reports:
        print(f'{r.algorithm}: converged={r.converged} foc={r.foc:.2e} wall={r.wall_time:.2f}s')
    return 0 if all(r.converged for r in reports) else 1


if __name__ == '__main__':
    sys.exit(main())
