"""Command-line entry point.

Exit codes: 0 success, 1 other package error, 2 usage or configuration error (including a missing
checkpoint), 3 non-finite loss, 4 failed gradient check.
"""
import argparse
import logging
import sys
from typing import Callable, Dict, List, Optional

from jgrp2o.ablation import run_ablation, VARIANTS
from jgrp2o.common_types import Precision
from jgrp2o.config import load_config, RunConfig
from jgrp2o.data.dataset import HandDataset, load_dataset, SyntheticDataset, write_native_dataset
from jgrp2o.data.loader import make_batch
from jgrp2o.evaluation.evaluator import evaluate, inference_table, predict_dataset
from jgrp2o.exceptions import ConfigError, GradCheckError, JgrP2OError, NonFiniteLossError
from jgrp2o.model.network import JgrP2ONet
from jgrp2o.numerics.gradcheck import grad_check, jitter_offsets
from jgrp2o.training.checkpoint import load_checkpoint
from jgrp2o.training.trainer import loss_objective, Trainer
from jgrp2o.utils.fs_handler import FSHandler, LocalFSHandler

log = logging.getLogger(__name__)

PREDICTIONS_FILE = 'predictions.csv'
GRADCHECK_FRAMES = 2

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4

fs: FSHandler = LocalFSHandler()


def configure_logging(level: str) -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(level.upper())


def _config(args: argparse.Namespace) -> RunConfig:
    return load_config(args.config, args.override, seed=args.seed, epochs=args.epochs, data=args.data, fs=fs)


def _dataset(config: RunConfig, split: str) -> HandDataset:
    data = config.data
    return load_dataset(
        data.root,
        data.format,
        config.model.joints,
        config.backbone.input_size,
        split,
        data,
        config.train.seed,
        fs,
    )


def _trained_net(config: RunConfig, args: argparse.Namespace) -> JgrP2ONet:
    net = JgrP2ONet.from_config(config)
    if args.checkpoint is None:
        if args.oracle:
            return net
        raise ConfigError('--checkpoint', 'a checkpoint is required')
    if not fs.exists(args.checkpoint):
        log.error('Checkpoint %s does not exist', args.checkpoint)
        raise ConfigError('--checkpoint', f'{args.checkpoint} does not exist')
    checkpoint = load_checkpoint(args.checkpoint, fs)
    checkpoint.check_joints(net.joints)
    net.params.load_state_dict(checkpoint.params)
    return net


def cmd_train(args: argparse.Namespace) -> int:
    config = _config(args)
    config.dump(args.out, fs)
    net = JgrP2ONet.from_config(config)
    log.info('Training %s', net)
    train_set = _dataset(config, config.data.split)
    test_set = _dataset(config, config.data.test_split) if config.train.validate_each_epoch else None
    trainer = Trainer(net, config, train_set, test_set, out_dir=args.out, fs=fs)
    if args.checkpoint is not None:
        if not fs.exists(args.checkpoint):
            raise ConfigError('--checkpoint', f'{args.checkpoint} does not exist')
        trainer.restore(load_checkpoint(args.checkpoint, fs))
    table = trainer.fit()
    if len(table):
        print(table.to_string(index=False))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config(args)
    net = _trained_net(config, args)
    config.dump(args.out, fs)
    report = evaluate(net, _dataset(config, config.data.test_split), config.eval, oracle=args.oracle)
    report.dump(args.out, fs, config.eval.template)
    print(f'mean 3D error: {report.mean_error_mm:.3f} mm over {report.frames} frames')
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    config = _config(args)
    net = _trained_net(config, args)
    config.dump(args.out, fs)
    predictions = predict_dataset(
        net, _dataset(config, config.data.test_split), config.eval.batch_size, oracle=args.oracle
    )
    table = inference_table(predictions)
    path = fs.join_path(args.out, PREDICTIONS_FILE)
    fs.write(path, table.to_csv(index=False, lineterminator='\n'))
    log.info('Wrote %s predicted joints to %s', len(table), path)
    return EXIT_OK


def cmd_gradcheck(args: argparse.Namespace) -> int:
    config = _config(args)
    config.model.precision = Precision.WIDE
    net = JgrP2ONet.from_config(config)
    dataset = SyntheticDataset(
        GRADCHECK_FRAMES, net.joints, config.train.seed, 'gradcheck', config.data, config.backbone.input_size
    )
    batch = make_batch([dataset[i] for i in range(len(dataset))], dtype=net.dtype)
    jitter_offsets(net.params, seed=config.train.seed)
    report = grad_check(loss_objective(net, batch, config.loss), net.params, seed=config.train.seed)
    print(f'max relative error: {report.max_error:.3e} ({report.checked} scalars, worst {report.worst})')
    if report.max_error > args.tol:
        raise GradCheckError(report.max_error, args.tol, report.worst)
    return EXIT_OK


def cmd_params(args: argparse.Namespace) -> int:
    config = _config(args)
    table = JgrP2ONet.from_config(config).parameter_breakdown()
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config = _config(args)
    config.dump(args.out, fs)
    data = config.data
    dataset = SyntheticDataset(
        args.count, config.model.joints, config.train.seed, data.split, data, config.backbone.input_size
    )
    frames = (dataset.raw(i) for i in range(len(dataset)))
    written = write_native_dataset(args.out, data.split, frames, data.intrinsics, data.cube, fs)
    print(f'wrote {written} frames to {fs.join_path(args.out, data.split)}')
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    config = _config(args)
    config.dump(args.out, fs)
    table = run_ablation(config, args.variants, out_dir=args.out, fs=fs)
    print(table.to_string(index=False))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='TOML file with section.key = value settings')
    common.add_argument('--override', action='append', default=[], metavar='SECTION.KEY=VALUE')
    common.add_argument('--seed', type=int, help='sets train.seed')
    common.add_argument('--epochs', type=int, help='sets train.epochs')
    common.add_argument('--data', help='dataset format (synth, native, icvl) or a native dataset folder')
    common.add_argument('--out', default='.', help='output folder')
    common.add_argument('--checkpoint', help='checkpoint to load (eval, infer) or resume from (train)')
    common.add_argument('--oracle', action='store_true', help='use ground-truth poses as predictions')
    common.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])

    parser = argparse.ArgumentParser(prog='jgrp2o', description='Depth-image hand pose estimation')
    commands = parser.add_subparsers(dest='command', required=True)
    handlers: Dict[str, Callable[[argparse.Namespace], int]] = {
        'train': cmd_train,
        'eval': cmd_eval,
        'infer': cmd_infer,
        'gradcheck': cmd_gradcheck,
        'params': cmd_params,
        'synth': cmd_synth,
        'ablate': cmd_ablate,
    }
    sub = {name: commands.add_parser(name, parents=[common]) for name in handlers}
    for name, handler in handlers.items():
        sub[name].set_defaults(handler=handler)
    sub['gradcheck'].add_argument('--tol', type=float, default=1e-4, help='maximum relative error')
    sub['synth'].add_argument('--count', type=int, default=16, help='number of frames')
    sub['ablate'].add_argument('--variants', nargs='+', default=list(VARIANTS), choices=list(VARIANTS))
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f'configuration error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteLossError as e:
        print(f'training aborted: {e}', file=sys.stderr)
        return EXIT_NUMERICAL
    except GradCheckError as e:
        print(f'gradient check failed: {e}', file=sys.stderr)
        return EXIT_CHECK
    except JgrP2OError as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
