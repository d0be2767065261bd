from quality.diagnostics import catalog
from quality.management.base import EmbermineCommand
from quality.reports import dumps


class Command(EmbermineCommand):
    help = "Lists the rule ids embermine knows about."

    def add_arguments(self, parser):
        subparsers = parser.add_subparsers(dest="action", required=True)
        listing = subparsers.add_parser("list", help="List every rule with its source, severity and critical flag.")
        listing.add_argument("--json", action="store_true")
        self.add_config_argument(listing)

    def handle(self, *args, **options):
        cfg = self.load_config(options)
        rules = catalog.listing(cfg.rules.critical_rules)
        if options["json"]:
            self.stdout.write(dumps(rules), ending="")
            return
        width = max(len(rule["id"]) for rule in rules)
        for rule in rules:
            flag = "critical" if rule["critical"] else ""
            self.stdout.write(
                f"{rule['id']:<{width}}  {rule['source']:<8}  {rule['severity']:<7}  {flag:<8}  {rule['description']}"
            )
