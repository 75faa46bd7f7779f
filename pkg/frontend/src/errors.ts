/** Error hierarchy mirroring the bridge's integer codes and names. */

export class BridgeError extends Error {
  constructor(
    message: string,
    public readonly code: number,
    public readonly remoteName: string,
  ) {
    super(message);
    this.name = "BridgeError";
  }
}

export class UnsafeStartError extends BridgeError {
  constructor(message: string, code: number) {
    super(message, code, "UnsafeStart");
    this.name = "UnsafeStartError";
  }
}

export class DegenerateInputError extends BridgeError {
  constructor(message: string, code: number) {
    super(message, code, "DegenerateInput");
    this.name = "DegenerateInputError";
  }
}

export class NonConvergenceError extends BridgeError {
  constructor(message: string, code: number) {
    super(message, code, "NonConvergence");
    this.name = "NonConvergenceError";
  }
}

export class DegenerateConstraintError extends BridgeError {
  constructor(message: string, code: number) {
    super(message, code, "DegenerateConstraint");
    this.name = "DegenerateConstraintError";
  }
}

export class BadArgumentError extends BridgeError {
  constructor(message: string, code: number) {
    super(message, code, "BadArgument");
    this.name = "BadArgumentError";
  }
}

export class BadHandleError extends BridgeError {
  constructor(message: string, code: number) {
    super(message, code, "BadHandle");
    this.name = "BadHandleError";
  }
}

export function wrapRemoteError(name: string, code: number, message: string): BridgeError {
  switch (name) {
    case "UnsafeStart":
      return new UnsafeStartError(message, code);
    case "DegenerateInput":
      return new DegenerateInputError(message, code);
    case "NonConvergence":
      return new NonConvergenceError(message, code);
    case "DegenerateConstraint":
      return new DegenerateConstraintError(message, code);
    case "BadArgument":
      return new BadArgumentError(message, code);
    case "BadHandle":
      return new BadHandleError(message, code);
    default:
      return new BridgeError(message, code, name);
  }
}
