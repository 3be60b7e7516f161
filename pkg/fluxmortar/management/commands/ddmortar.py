"""
Command-line surface: `python manage.py ddmortar run.cfg`.
"""
import logging

from django.core.management.base import BaseCommand, CommandError

from fluxmortar.exceptions import FluxMortarError
from fluxmortar.runner import run
from fluxmortar.serializers import parse_config

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = 'Run a flux-mortar domain decomposition study, solve or oracle comparison from a config file.'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Path to a key = value configuration file')
        parser.add_argument('--output', help='Output directory (overrides output.dir)')
        parser.add_argument('--workers', type=int, help='Worker threads for subdomain solves')

    def handle(self, *args, **options):
        try:
            config = parse_config(options['config'])
            if options.get('workers'):
                config.data['solver']['workers'] = options['workers']
            result = run(config, options.get('output'))
        except FluxMortarError as exc:
            raise CommandError(f'[{exc.code}] {exc.message}', returncode=exc.exit_code) from exc

        self.stdout.write(self.style.SUCCESS(f'{result.mode} finished'))
        oracle = result.summary.get('oracle')
        if oracle:
            self.stdout.write(f'max |p_DD - p_mono| = {oracle["max_pressure_difference"]:.3e}, '
                              f'max |u_DD - u_mono| = {oracle["max_flux_difference"]:.3e}')
        fine = result.summary.get('monolithic')
        if fine:
            self.stdout.write(f'fine-grid reference ({fine["cells"]} cells): '
                              f'max |p_DD - p_fine| = {fine["max_pressure_difference"]:.3e}')
        report = result.summary.get('report')
        if report:
            self.stdout.write(f'iterations: {report["iterations"]}, '
                              f'compatibility residual: {report["compatibility_residual"]:.2e}')
            for interface, sigma in report['sigma_min'].items():
                self.stdout.write(f'  interface {interface}: sigma_min = {sigma:.3e}')
        for row in result.summary.get('table', []):
            self.stdout.write(f'  h_min={row["h_min"]:.2e} e_p={row["e_p"]:.2e} e_u={row["e_u"]:.2e} '
                              f'iters={row["iters"]}')
        for path in result.artifacts:
            self.stdout.write(f'wrote {path}')
