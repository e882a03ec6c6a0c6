"""``otpbox`` command line.

Exit status: 0 ok, 2 usage, 3 one-time violation, 4 policy mismatch,
5 bad input, 6 decryption/authentication failure, 7 session or measurement
problem, 8 resource cap, 9 other TPM error, 10 flag already provisioned.
Results are reported as total risk in deci-units (risk x 10).
"""

from __future__ import annotations

import argparse
import os
import random
import sys
from pathlib import Path

from . import __version__, bench, otm, otp
from .circuit import client_bits, compile_genomic, parse_circuit
from .errors import InputError, OtpError
from .garble import GarbledCircuit, KeyFile
from .genomics import (decode_client, decode_vendor, encode_vendor, load_vendor_table,
                       preprocess_ancestry, read_compact, write_compact)

BOX_ENV = "OTPBOX_BOX"


def _box(args) -> otp.Box:
    return otp.Box(args.box or os.environ.get(BOX_ENV) or "box")


def _state(args, box):
    state = box.state()
    state.latency_ms = args.latency_ms
    state.virtual_clock = getattr(args, "virtual_clock", False)
    return state


def _vendor_records(args):
    if args.vendor:
        return decode_vendor(read_compact(args.vendor))
    return load_vendor_table(args.vendor_table)


def _rng(args):
    return random.Random(args.seed) if args.seed is not None else None


def _report(result: otp.OtpResult, out):
    out.write(result.to_text())


# -- subcommands ---------------------------------------------------------------------

def cmd_preprocess(args, out):
    if args.vendor_table is not None:
        compact = encode_vendor(load_vendor_table(args.vendor_table or None))
    elif args.input:
        with open(args.input) as fh:
            compact = preprocess_ancestry(fh)
    else:
        raise InputError("give an AncestryDNA file or --vendor-table")
    if args.output:
        write_compact(args.output, compact)
        out.write(f"{args.output}: {len(compact) * 4} bits\n")
    else:
        out.write(compact.lower() + "\n")


def cmd_provision_txt(args, out):
    box = _box(args)
    state = _state(args, box)
    vendor = _vendor_records(args)
    with box.launch(state, otp.TXT_PAYLOAD, otp.PROVISION) as s:
        image = otp.txt_provision(s, vendor, box.txt_dir, args.reprovision)
    out.write(f"sealed {len(image.sealed_vendor_records)} vendor records into {box.txt_dir}\n")


def cmd_run_txt(args, out):
    box = _box(args)
    state = _state(args, box)
    client = decode_client(read_compact(args.client))
    image = otp.TxtOnlyImage.load(box.txt_dir)
    with box.launch(state, otp.TXT_PAYLOAD, otp.EXECUTE) as s:
        result = otp.txt_execute(s, image, client, box.txt_dir / "result.txt")
    _report(result, out)


def cmd_gc_gen(args, out):
    box = _box(args)
    box.gc_dir.mkdir(parents=True, exist_ok=True)
    if args.circuit:
        with open(args.circuit) as fh:
            circuit = parse_circuit(fh.read())
        gen_bits = args.gen_bits
    else:
        if args.client:
            count = len(decode_client(read_compact(args.client)))
        elif args.client_records:
            count = args.client_records
        else:
            raise InputError("give --client or --client-records to size the circuit")
        circuit = compile_genomic(_vendor_records(args), count)
        gen_bits = None
    gc, pairs = otp.garble_circuit(circuit, gen_bits, _rng(args))
    gc.write(box.gc_file)
    otp.write_pairs_plain(box.pairs_plain, pairs)
    out.write(f"garbled {circuit.gate_count} gates, {len(pairs)} evaluator pairs "
              f"-> {box.gc_file}\n")


def cmd_gc_provision(args, out):
    box = _box(args)
    state = _state(args, box)
    if not box.pairs_plain.exists():
        raise InputError(f"{box.pairs_plain} not found; run gc-gen first")
    with box.launch(state, otp.GC_SELECT_PAYLOAD, otp.PROVISION) as s:
        image = otp.provision_from_plain(s, box.pairs_plain, args.mode, box.otm_dir,
                                         args.chunk, args.reprovision)
    out.write(f"provisioned {image.evaluator_width} pairs ({image.mode}) into {box.otm_dir}\n")


def cmd_gc_select(args, out):
    box = _box(args)
    state = _state(args, box)
    image = otm.OtmImage.load(box.otm_dir)
    bits = client_bits(decode_client(read_compact(args.client)))
    with box.launch(state, otp.GC_SELECT_PAYLOAD, otp.EXECUTE) as s:
        otp.gc_select(s, image, bits, box.keys_file)
    out.write(f"selected {len(bits)} labels -> {box.keys_file}\n")


def cmd_gc_evl(args, out):
    box = _box(args)
    keys = KeyFile.read(args.keys or box.keys_file)
    result = otp.gc_evaluate(GarbledCircuit.read(box.gc_file), keys,
                             box.gc_dir / "result.txt")
    _report(result, out)


def cmd_bench(args, out):
    if args.sizes:
        sizes = args.sizes
    else:
        sizes = bench.VENDOR_SWEEP if args.sweep == "vendor" else bench.CLIENT_SWEEP
    rows = bench.bench_sweep(
        args.variant, args.sweep, sizes,
        fixed_vendor_bits=args.fixed_vendor_bits, fixed_client_bits=args.fixed_client_bits,
        mode=args.mode, chunk=args.chunk, latency_ms=args.latency_ms,
        virtual_clock=args.virtual_clock, seed=args.seed or 0, big=args.big,
        garble_budget=args.garble_budget)
    out.write(bench.render_rows(rows, args.format))
    if args.out_dir:
        from .plotting import plot_rows

        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        stem = f"bench-{args.variant}-{args.sweep}"
        (out_dir / f"{stem}.csv").write_text(bench.render_rows(rows, "csv"))
        plot_rows(rows, out_dir / f"{stem}.png")
        sys.stderr.write(f"wrote {out_dir / stem}.csv and {stem}.png\n")


def cmd_recommend(args, out):
    out.write(bench.recommend(args.vendor_bits, args.client_bits) + "\n")


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otpbox", description="One-time programs on a simulated TPM.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def box_opts(sp, tpm=True):
        sp.add_argument("--box", help=f"box directory (default: ${BOX_ENV} or ./box)")
        if tpm:
            sp.add_argument("--latency-ms", type=float, default=0.0,
                            help="simulated delay per seal/unseal")

    def vendor_opts(sp):
        sp.add_argument("--vendor", help="vendor compact-hex file (default: BRCA1 table)")
        sp.add_argument("--vendor-table", help="vendor TSV instead of the bundled table")

    sp = sub.add_parser("preprocess", help="AncestryDNA export or vendor TSV -> compact hex")
    sp.add_argument("input", nargs="?", help="AncestryDNA raw data file")
    sp.add_argument("--vendor-table", nargs="?", const="",
                    help="encode a vendor TSV (bundled table if no path)")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("provision-txt", help="seal vendor records and init the flag")
    box_opts(sp)
    vendor_opts(sp)
    sp.add_argument("--reprovision", action="store_true")
    sp.set_defaults(func=cmd_provision_txt)

    sp = sub.add_parser("run-txt", help="run the TXT-only program once")
    box_opts(sp)
    sp.add_argument("--client", required=True, help="client compact-hex file")
    sp.set_defaults(func=cmd_run_txt)

    sp = sub.add_parser("gc-gen", help="garble the circuit and write evaluator pairs")
    box_opts(sp, tpm=False)
    vendor_opts(sp)
    sp.add_argument("--client", help="client file (only its record count is used)")
    sp.add_argument("--client-records", type=int)
    sp.add_argument("--circuit", help="circuit text file instead of the genomic test")
    sp.add_argument("--gen-bits", help="generator input bits for --circuit")
    sp.add_argument("--seed", type=int, help="deterministic labels (testing only)")
    sp.set_defaults(func=cmd_gc_gen)

    sp = sub.add_parser("gc-provision", help="store evaluator pairs in the one-time memory")
    box_opts(sp)
    sp.add_argument("--mode", choices=otm.MODES, default=otm.MASTER_KEY)
    sp.add_argument("--chunk", type=int, default=1)
    sp.add_argument("--reprovision", action="store_true")
    sp.set_defaults(func=cmd_gc_provision)

    sp = sub.add_parser("gc-select", help="release one label per client input bit, once")
    box_opts(sp)
    sp.add_argument("--client", required=True)
    sp.set_defaults(func=cmd_gc_select)

    sp = sub.add_parser("gc-evl", help="evaluate the garbled circuit (no TPM needed)")
    box_opts(sp, tpm=False)
    sp.add_argument("--keys", help="key file (default: box/gc/keys.txt)")
    sp.set_defaults(func=cmd_gc_evl)

    sp = sub.add_parser("bench", help="operation-count sweep")
    sp.add_argument("--variant", choices=bench.VARIANTS, required=True)
    sp.add_argument("--sweep", choices=("vendor", "client"), required=True)
    sp.add_argument("--sizes", type=int, nargs="+", help="sizes in bits")
    sp.add_argument("--fixed-vendor-bits", type=int, default=bench.BASE_VENDOR_BITS)
    sp.add_argument("--fixed-client-bits", type=int, default=bench.BASE_CLIENT_BITS)
    sp.add_argument("--mode", choices=otm.MODES, default=otm.MASTER_KEY)
    sp.add_argument("--chunk", type=int, default=1)
    sp.add_argument("--latency-ms", type=float, default=0.0)
    sp.add_argument("--virtual-clock", action="store_true",
                    help="add latency to the reported time instead of sleeping")
    sp.add_argument("--garble-budget", type=int, default=bench.DEFAULT_GARBLE_BUDGET,
                    help="largest circuit (gates) to garble and evaluate for real")
    sp.add_argument("--big", action="store_true", help="raise the size cap to 22M bits")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--format", choices=("table", "csv", "json"), default="table")
    sp.add_argument("--out-dir", help="also write CSV and a PNG figure here")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("recommend", help="pick a variant for the given input sizes")
    sp.add_argument("--vendor-bits", type=int, required=True)
    sp.add_argument("--client-bits", type=int, required=True)
    sp.set_defaults(func=cmd_recommend)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        args.func(args, out)
    except OtpError as exc:
        sys.stderr.write(f"otpbox: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except FileNotFoundError as exc:
        sys.stderr.write(f"otpbox: {exc}\n")
        return InputError.exit_code
    return 0


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
