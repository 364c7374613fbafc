/** A dataset file is missing, truncated, or not what its header claims. */
export class FormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FormatError";
  }
}

/** A feature selection names a layer the record does not carry. */
export class UnknownFeature extends Error {
  constructor(message: string) {
    super(message);
    this.name = "UnknownFeature";
  }
}

/** Ray generation was asked for on a frame with no camera pose. */
export class MissingCamera extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MissingCamera";
  }
}
