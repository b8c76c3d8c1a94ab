class Inventory {
  int items;
  int capacity;
  int reserved;
  boolean canAdd(int n) {
    return items + n > capacity;
  }
  void add(int n) {
    items = items + n;
  }
  void remove(int n) {
    if (n > items) {
      return;
    }
    items = items - n;
  }
  int free() {
    return capacity - items;
  }
  void reserve(int n) {
    reserved = reserved + n;
  }
  int available() {
    return items - reserved;
  }
}
