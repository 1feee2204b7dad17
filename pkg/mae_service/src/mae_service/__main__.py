import argparse
import logging
import sys

from .server import InpaintService, ServiceConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mae-service",
        description="masked-autoencoder inpainting service (newline-delimited JSON)",
    )
    parser.add_argument("--checkpoint", required=True, help="model checkpoint path")
    mode = parser.add_mutually_exclusive_group(required=True)
    mode.add_argument("--stdio", action="store_true", help="serve on stdin/stdout")
    mode.add_argument("--tcp", metavar="HOST:PORT", help="serve on a TCP socket")
    parser.add_argument("--device", default="cpu")
    parser.add_argument(
        "--norm-pix", action="store_true",
        help="mark the checkpoint as a norm_pix_loss variant (recorded in ping output)",
    )
    parser.add_argument("--max-concurrent", type=int, default=1)
    args = parser.parse_args(argv)

    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        service = InpaintService(
            ServiceConfig(
                checkpoint=args.checkpoint,
                tcp=args.tcp,
                device=args.device,
                norm_pix_loss=args.norm_pix,
                max_concurrent=args.max_concurrent,
            )
        )
    except (OSError, ValueError) as exc:
        print(f"mae-service: error: {exc}", file=sys.stderr)
        return 2
    if args.stdio:
        service.serve_stdio()
        return 0
    server = service.serve_tcp(args.tcp)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
