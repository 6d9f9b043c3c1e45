"""``aivd`` command line.

Exit codes: 0 success, 1 validation or domain failure, 2 usage error,
3 I/O or store error. Failures print one line to stderr; successful runs
write only to stdout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .aibom import diff_aibom, parse_aibom, validate_aibom
from .canonical import dumps, loads
from .catalog import Catalog, WeaknessClass, get_mitigation, get_weakness, list_by_class, load_catalog_dir
from .errors import AivdError
from .record import LifecycleStatus, parse_record, record_to_dict, serialize_record, validate_record
from .registry import CnaRegistration, QueryFilter
from .severity import EnvironmentalContext, Trigger, apply_environmental, compute_score, parse_vector
from .store import Store, default_data_dir, seed_dir
from .validation import Profile, ValidationReport

STORE_ERRORS = frozenset({"CORRUPT_STORE", "BIND_FAILURE"})


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


# -- helpers -------------------------------------------------------------------


def _read_json(path: str) -> Any:
    return loads(Path(path).read_bytes())


def _out(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _store(args: argparse.Namespace) -> Store:
    return Store.open(args.data_dir or default_data_dir())


def _catalog(args: argparse.Namespace) -> Catalog:
    """Catalog of the selected store if it has one, else the packaged seed catalog."""
    root = Path(args.data_dir or default_data_dir()) / "catalog"
    return load_catalog_dir(root if any(root.glob("*.json")) else seed_dir() / "catalog")


def _print_report(args: argparse.Namespace, report: ValidationReport) -> int:
    if args.json:
        _out(dumps(report.to_dict()))
    else:
        _out("valid" if report.valid else "invalid")
        for f in report.findings:
            _out(f"  {f.level.value.lower()}: {f.code} {f.path}: {f.message}")
    return 0 if report.valid else 1


def _summary(record: Any) -> str:
    current = record.severity.current
    score = f"{current.value:.1f} {current.band.value}" if current else "unscored"
    return f"{record.id}  {record.status.value:<9}  {score:<13}  {record.description[:60]}"


# -- commands ------------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    record = parse_record(_read_json(args.file))
    return _print_report(args, validate_record(record, args.profile, _catalog(args)))


def cmd_score(args: argparse.Namespace) -> int:
    vector = parse_vector(args.vector)
    if args.env:
        result = apply_environmental(vector, EnvironmentalContext.from_dict(_read_json(args.env)))
    else:
        result = compute_score(vector)
    if args.json:
        _out(dumps({"value": result.value, "band": result.band.value, "vector": result.vector.render()}))
    else:
        _out(f"{result.value:.1f} {result.band.value}")
    return 0


def cmd_submit(args: argparse.Namespace) -> int:
    draft = parse_record(_read_json(args.file))
    with _store(args) as store:
        record = store.registry.submit(draft, args.cna)
    _out(serialize_record(record) if args.json else str(record.id))
    return 0


def cmd_show(args: argparse.Namespace) -> int:
    with _store(args) as store:
        record = store.registry.get(args.id)
    if args.json:
        sys.stdout.write(serialize_record(record))
        return 0
    _out(_summary(record))
    if record.ai_system is not None:
        _out(f"  system:     {record.ai_system.name} ({record.ai_system.type})")
    _out(f"  weaknesses: {', '.join(record.weaknesses) or '-'}")
    _out(f"  vendors:    {', '.join(record.vendors) or '-'}")
    if record.report_date:
        _out(f"  reported:   {record.report_date.isoformat()} by {record.reported_by}")
    return 0


def cmd_update(args: argparse.Namespace) -> int:
    with _store(args) as store:
        record = store.registry.update_fields(args.id, _read_json(args.file), args.actor)
    _out(serialize_record(record) if args.json else f"{record.id} updated")
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    params = {
        "weakness": args.weakness,
        "product": args.product,
        "vendor": args.vendor,
        "status": args.status,
        "min_score": args.min_score,
        "max_score": args.max_score,
        "from": args.from_date,
        "to": args.to_date,
        "q": args.q,
        "page": args.page,
        "page_size": args.page_size,
    }
    flt = QueryFilter.from_params(params)
    with _store(args) as store:
        page = store.registry.query(flt)
    if args.json:
        _out(dumps([record_to_dict(r) for r in page.items]))
    else:
        for r in page.items:
            _out(_summary(r))
        _out(f"{len(page.items)} of {page.total} record(s), page {page.page}")
    return 0


def cmd_status(args: argparse.Namespace) -> int:
    to = LifecycleStatus.parse(args.to)
    with _store(args) as store:
        record = store.registry.transition_status(args.id, to, args.actor, args.note)
    _out(serialize_record(record) if args.json else f"{record.id} {record.status.value}")
    return 0


def cmd_rescore(args: argparse.Namespace) -> int:
    trigger = Trigger.parse(args.trigger)
    with _store(args) as store:
        record = store.registry.rescore(args.id, args.vector, trigger, args.actor, args.note)
    current = record.severity.current
    _out(serialize_record(record) if args.json else f"{record.id} {current.value:.1f} {current.band.value}")
    return 0


def cmd_catalog_list(args: argparse.Namespace) -> int:
    catalog = _catalog(args)
    if args.weakness_class:
        try:
            entries = list_by_class(catalog, WeaknessClass(args.weakness_class))
        except ValueError:
            choices = ", ".join(c.value for c in WeaknessClass)
            raise UsageError(f"--class must be one of {choices}") from None
    else:
        entries = list(catalog.weaknesses.values())
    if args.json:
        _out(dumps([e.to_dict() for e in entries]))
    else:
        for e in entries:
            _out(f"{e.id:<12} {e.weakness_class.value:<20} {e.name}")
    return 0


def cmd_catalog_show(args: argparse.Namespace) -> int:
    catalog = _catalog(args)
    if args.id.upper().startswith("MIT-"):
        entry = get_mitigation(catalog, args.id)
    else:
        entry = get_weakness(catalog, args.id)
    doc = entry.to_dict()
    if args.json:
        _out(dumps(doc))
    else:
        for key, value in doc.items():
            _out(f"{key}: {value if isinstance(value, str) else dumps(value).strip()}")
    return 0


def cmd_aibom_validate(args: argparse.Namespace) -> int:
    return _print_report(args, validate_aibom(parse_aibom(_read_json(args.file))))


def cmd_aibom_diff(args: argparse.Namespace) -> int:
    diff = diff_aibom(parse_aibom(_read_json(args.a)), parse_aibom(_read_json(args.b)))
    if args.json:
        _out(dumps(diff.to_dict()))
        return 0
    for sign, entries in (("+", diff.added), ("-", diff.removed), ("~", diff.modified)):
        for e in entries:
            d = e.to_dict()
            _out(f"{sign} {d['path']}: {dumps(d.get('before')).strip()} -> {dumps(d.get('after')).strip()}")
    if not diff:
        _out("no differences")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    with _store(args) as store:
        n = store.export(args.dir)
    _out(dumps({"exported": n}) if args.json else f"exported {n} record(s) to {args.dir}")
    return 0


def cmd_import(args: argparse.Namespace) -> int:
    with _store(args) as store:
        n = store.import_dir(args.dir, args.actor)
    _out(dumps({"imported": n}) if args.json else f"imported {n} record(s)")
    return 0


def cmd_init(args: argparse.Namespace) -> int:
    with _store(args) as store:
        n = store.import_dir(seed_dir(), "seed") if args.with_seed else 0
    _out(f"initialized {store.root} ({n} seed record(s))")
    return 0


def cmd_cna_add(args: argparse.Namespace) -> int:
    first, _, last = args.years.partition("-")
    if not (first.isdigit() and last.isdigit()):
        raise UsageError("--years must look like 2020-2030")
    with _store(args) as store:
        store.register_cna(CnaRegistration(args.cna_id, args.name, int(first), int(last)))
    _out(f"registered {args.cna_id}")
    return 0


def cmd_cna_list(args: argparse.Namespace) -> int:
    with _store(args) as store:
        cnas = sorted(store.registry.cnas.values(), key=lambda c: c.cna_id)
    if args.json:
        _out(dumps([c.to_dict() for c in cnas]))
    else:
        for c in cnas:
            _out(f"{c.cna_id:<20} {c.first_year}-{c.last_year}  {c.name}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    serve(args.data_dir or default_data_dir(), args.addr)
    return 0


# -- parser --------------------------------------------------------------------


def _profile(text: str) -> Profile:
    try:
        return Profile.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument("--data-dir", default=argparse.SUPPRESS, help="store directory (default $AIVD_DATA_DIR or ./.aivd)")
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="canonical JSON output")

    parser = Parser(prog="aivd", description="AI vulnerability database tooling")
    parser.add_argument("--version", action="version", version=f"aivd {__version__}")
    parser.add_argument("--data-dir", default=None, help="store directory (default $AIVD_DATA_DIR or ./.aivd)")
    parser.add_argument("--json", action="store_true", help="canonical JSON output")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func: Callable[[argparse.Namespace], int], help: str, where: Any = sub) -> Parser:
        p = where.add_parser(name, help=help, parents=[common])
        p.set_defaults(func=func)
        return p

    p = add("validate", cmd_validate, "validate a record document")
    p.add_argument("file")
    p.add_argument("--profile", type=_profile, default=Profile.SUBMISSION, help="submission, triage or disclosure")

    p = add("score", cmd_score, "score a severity vector")
    p.add_argument("--vector", required=True)
    p.add_argument("--env", help="environmental context JSON file")

    p = add("submit", cmd_submit, "submit a draft record")
    p.add_argument("file")
    p.add_argument("--cna", required=True)

    p = add("show", cmd_show, "show a stored record")
    p.add_argument("id")

    p = add("update", cmd_update, "apply a field patch to a record")
    p.add_argument("id")
    p.add_argument("file", help="JSON object of top-level fields")
    p.add_argument("--actor", default="cli")

    p = add("search", cmd_search, "query stored records")
    p.add_argument("--weakness")
    p.add_argument("--product", help="product identifier prefix, e.g. 2024/google")
    p.add_argument("--vendor")
    p.add_argument("--status", help="comma-separated lifecycle states")
    p.add_argument("--min-score", dest="min_score")
    p.add_argument("--max-score", dest="max_score")
    p.add_argument("--from", dest="from_date")
    p.add_argument("--to", dest="to_date")
    p.add_argument("--q", help="text in description or impact")
    p.add_argument("--page", default="1")
    p.add_argument("--page-size", dest="page_size", default="50")

    p = add("status", cmd_status, "move a record through the lifecycle")
    p.add_argument("id")
    p.add_argument("to")
    p.add_argument("--actor", required=True)
    p.add_argument("--note", default="")

    p = add("rescore", cmd_rescore, "append a new severity assessment")
    p.add_argument("id")
    p.add_argument("--vector", required=True)
    p.add_argument("--trigger", required=True, help=", ".join(t.value for t in Trigger))
    p.add_argument("--actor", default="cli")
    p.add_argument("--note", default="")

    cat = sub.add_parser("catalog", help="inspect the weakness and mitigation catalogs", parents=[common])
    cat_sub = cat.add_subparsers(dest="catalog_command", required=True, metavar="COMMAND")
    p = add("list", cmd_catalog_list, "list weaknesses", cat_sub)
    p.add_argument("--class", dest="weakness_class", help=", ".join(c.value for c in WeaknessClass))
    p = add("show", cmd_catalog_show, "show one weakness or mitigation", cat_sub)
    p.add_argument("id")

    ab = sub.add_parser("aibom", help="AIBOM tooling", parents=[common])
    ab_sub = ab.add_subparsers(dest="aibom_command", required=True, metavar="COMMAND")
    p = add("validate", cmd_aibom_validate, "validate an AIBOM document", ab_sub)
    p.add_argument("file")
    p = add("diff", cmd_aibom_diff, "diff two AIBOM documents", ab_sub)
    p.add_argument("a")
    p.add_argument("b")

    p = add("export", cmd_export, "write the store as an export directory")
    p.add_argument("dir")

    p = add("import", cmd_import, "load an export directory")
    p.add_argument("dir")
    p.add_argument("--actor", default="import")

    p = add("init", cmd_init, "create a store")
    p.add_argument("--with-seed", action="store_true", help="import the packaged seed corpus")

    cna = sub.add_parser("cna", help="manage naming authorities", parents=[common])
    cna_sub = cna.add_subparsers(dest="cna_command", required=True, metavar="COMMAND")
    p = add("add", cmd_cna_add, "register a CNA", cna_sub)
    p.add_argument("cna_id")
    p.add_argument("--name", default="")
    p.add_argument("--years", default="1999-9999", help="allowed id years, e.g. 2020-2030")
    add("list", cmd_cna_list, "list CNAs", cna_sub)

    p = add("serve", cmd_serve, "run the HTTP API")
    p.add_argument("--addr", default=None, help="host:port (default $AIVD_ADDR or 127.0.0.1:8640)")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except AivdError as exc:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        return 3 if exc.code in STORE_ERRORS else 1
    except OSError as exc:
        print(f"error: IO_ERROR: {exc}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
