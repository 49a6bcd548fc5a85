"""Thermal-block benchmark: configuration, runs and report files."""
import csv
import dataclasses
import io
import logging
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .coeff import thermal_block_diffusion, thermal_block_space
from .fom import FullOrderModel, SolveCounters
from .grid import build_mesh
from .optimizer import TrustRegionConfig, run_bfgs_fom, run_tr

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
TABLE_COLUMNS = ['algorithm', 'DG-MsFEM', 'LRBM', 'Local', 'outer', 'inner', 'mu_error']


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    preset: str = 'desk'
    n_H: int = 8
    s: int = 6
    N1: int = 24
    N2: int = 48
    field_seed: int = 42
    desired_seed: int = 43
    initial_seed: int = 44
    lower: float = 1.0
    upper: float = 4.0
    middle_upper: float = 1.2
    sigma_d: float = 1000.0
    sigma: float = 1e-4
    f: float = 10.0
    sigma0: float = 16.0
    out: str = 'out'
    tr: TrustRegionConfig = field(default_factory=TrustRegionConfig)

    def validate(self):
        n = self.n_H * self.s
        if self.n_H < 1 or self.s < 1:
            raise ConfigError('n_H and s must be positive')
        for name in ('N1', 'N2'):
            N = getattr(self, name)
            if N < 1 or n % N:
                raise ConfigError(f'{name}={N} does not divide the fine resolution n_H*s={n}')
        if n % 4:
            raise ConfigError(f'fine resolution {n} does not resolve the 4x4 thermal blocks')
        if not self.lower <= min(self.upper, self.middle_upper):
            raise ConfigError('parameter bounds are not well ordered')
        if self.sigma_d < 0 or self.sigma < 0:
            raise ConfigError('objective weights must be non-negative')
        return self

    def space(self):
        return thermal_block_space(self.lower, self.upper, self.middle_upper)

    def desired_parameter(self):
        return self.space().sample(np.random.default_rng(self.desired_seed))

    def initial_parameter(self):
        return self.space().sample(np.random.default_rng(self.initial_seed))

    def with_seed(self, seed):
        return dataclasses.replace(self, field_seed=seed, desired_seed=seed + 1, initial_seed=seed + 2)


PRESETS = {
    'desk': {},
    'paper': dict(n_H=100, s=6, N1=150, N2=300),
}


def preset(name):
    if name not in PRESETS:
        raise ConfigError(f'unknown preset {name!r}; choose from {sorted(PRESETS)}')
    return RunConfig(preset=name, **PRESETS[name]).validate()


def _flat_items(cfg):
    for f_ in fields(cfg):
        if f_.name == 'tr':
            for g in fields(cfg.tr):
                yield f'tr.{g.name}', getattr(cfg.tr, g.name), g.type
        else:
            yield f_.name, getattr(cfg, f_.name), f_.type


def format_config(cfg):
    lines = ['# lrbtr run configuration', f'version = {CONFIG_VERSION}']
    for key, value, _ in _flat_items(cfg):
        lines.append(f'{key} = {value!r}' if isinstance(value, float) else f'{key} = {value}')
    return '\n'.join(lines) + '\n'


def _convert(text, typ, default):
    kind = type(default) if default is not None else float
    if typ in (int, 'int') or kind is int:
        return int(text)
    if typ in (str, 'str') or kind is str:
        return text
    return float(text)


def parse_config(text, base=None):
    """Parse the flat ``key = value`` format; every problem names its line."""
    cfg = dataclasses.replace(base or RunConfig())
    cfg.tr = dataclasses.replace(cfg.tr)
    known = {k: (v, t) for k, v, t in _flat_items(cfg)}
    version_seen = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f'line {lineno}: expected "key = value", got {raw!r}')
        key, value = (x.strip() for x in line.split('=', 1))
        if key == 'version':
            if value != str(CONFIG_VERSION):
                raise ConfigError(f'line {lineno}: unsupported config version {value}')
            version_seen = True
            continue
        if key not in known:
            raise ConfigError(f'line {lineno}: unknown key {key!r}')
        default, typ = known[key]
        try:
            converted = _convert(value, typ, default)
        except ValueError:
            raise ConfigError(f'line {lineno}: cannot parse {value!r} for {key}') from None
        if key.startswith('tr.'):
            setattr(cfg.tr, key[3:], converted)
        else:
            setattr(cfg, key, converted)
    if not version_seen:
        raise ConfigError('missing "version" line')
    try:
        cfg.tr.__post_init__()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return cfg.validate()


def load_config(path, base=None):
    with open(path) as fp:
        return parse_config(fp.read(), base)


def build_problem(cfg):
    """Full-order model with the objective attached."""
    cfg.validate()
    space = cfg.space()
    mesh = build_mesh(cfg.n_H, cfg.s)
    diffusion = thermal_block_diffusion(cfg.N1, cfg.N2, cfg.field_seed)
    fom = FullOrderModel(mesh, diffusion, space, f=cfg.f, sigma0=cfg.sigma0)
    fom.set_objective(cfg.sigma_d, cfg.sigma, cfg.desired_parameter())
    return fom


def run_benchmark(cfg, algorithms=('BFGS-FOM', 'TR-LRBM')):
    """Run the selected algorithms from the same initial guess."""
    fom = build_problem(cfg)
    mu0 = cfg.initial_parameter()
    reports = []
    for alg in algorithms:
        fom.counters = SolveCounters()
        runner = run_bfgs_fom if alg == 'BFGS-FOM' else run_tr
        logger.info('running %s', alg)
        reports.append(runner(fom, cfg.tr, mu0))
    return fom, reports


def _fmt(x):
    if x is None or (isinstance(x, float) and np.isnan(x)):
        return ''
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def table_rows(reports, mu_opt):
    rows = []
    for r in reports:
        c = r.counters
        tr = r.algorithm != 'BFGS-FOM'
        rows.append([r.algorithm, c['fom'], c['reduced'] if tr else None, c['local'] if tr else None,
                     c['outer'], c['inner'] if tr else None, r.mu_error(mu_opt)])
    return rows


def emit_table(reports, mu_opt):
    """Aligned text table and CSV with the evaluation / iteration / accuracy columns."""
    rows = table_rows(reports, mu_opt)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator='\n')
    w.writerow(TABLE_COLUMNS)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    cells = [TABLE_COLUMNS] + [[('-' if x is None else f'{x:.2e}' if isinstance(x, float) else str(x))
                                for x in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(TABLE_COLUMNS))]
    text = '\n'.join('  '.join(c.rjust(wd) if i else c.ljust(wd) for i, (c, wd) in enumerate(zip(r, widths)))
                     for r in cells) + '\n'
    return text, buf.getvalue()


def emit_decay(reports, mu_opt):
    """``{algorithm: csv}`` of relative parameter error per outer iterate."""
    out = {}
    for r in reports:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator='\n')
        w.writerow(['k', 'relative_mu_error'])
        for k, e in enumerate(r.decay(mu_opt)):
            w.writerow([k, _fmt(e)])
        out[r.algorithm] = buf.getvalue()
    return out


def emit_history(report):
    buf = io.StringIO()
    if report.history:
        keys = list(report.history[0])
        w = csv.writer(buf, lineterminator='\n')
        w.writerow(keys)
        for h in report.history:
            w.writerow([_fmt(h.get(k)) for k in keys])
    return buf.getvalue()


def read_csv(text):
    return list(csv.reader(io.StringIO(text)))


def write_reports(cfg, reports, mu_opt, out=None):
    out = out or cfg.out
    os.makedirs(out, exist_ok=True)

    def dump(name, text):
        with open(os.path.join(out, name), 'w', newline='') as fp:
            fp.write(text)

    text, table = emit_table(reports, mu_opt)
    dump('table.txt', text)
    dump('table.csv', table)
    for alg, dec in emit_decay(reports, mu_opt).items():
        dump(f'decay_{alg}.csv', dec)
    for r in reports:
        dump(f'history_{r.algorithm}.csv', emit_history(r))
    dump('config_used.txt', format_config(cfg))
    dump('timing.txt', ''.join(f'{r.algorithm} {r.wall_time:.3f}s\n' for r in reports))
    return text
